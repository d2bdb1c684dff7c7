"""Green-function records on Sigma x Sigma and the spectral data they encode.

The time-domain Green function restricted to Sigma is
``G(x, y; t) = t phi_0(x) phi_0(y) + sum_j phi_j(x) phi_j(y) sin(w_j t) / w_j``.
Its frequencies are found by multichannel ESPRIT; the amplitudes give, per
eigenvalue, the Sigma-restricted sum ``sum_l phi_l(x) phi_l(y)`` over the
eigenspace, which fixes the traces up to a rotation inside each eigenspace.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .manifold_forge import DiscreteManifold, Hypersurface, SpectralDataset


class GreenError(ValueError):
    pass


@dataclass(frozen=True)
class GreenRecord:
    """``samples[n, x, y]`` is the Green function at ``t = n dt`` (source y)."""

    vertices: np.ndarray
    samples: np.ndarray  # (n_t, S, S)
    dt: float
    manifold_id: str = ""
    components: tuple = ()
    weights: np.ndarray | None = None
    coords: np.ndarray | None = None
    leapfrog: bool = True  # samples follow the leapfrog recursion exactly

    @property
    def duration(self) -> float:
        return self.dt * (self.samples.shape[0] - 1)

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.samples.shape[0])

    def at(self, t: float) -> np.ndarray:
        if t < 0:
            return np.zeros(self.samples.shape[1:])
        k = int(round(t / self.dt))
        return self.samples[min(k, self.samples.shape[0] - 1)]

    def reciprocity_error(self) -> float:
        s = self.samples
        return float(np.abs(s - s.transpose(0, 2, 1)).max())


@dataclass
class PoleSet:
    lambdas: np.ndarray  # distinct eigenvalue estimates, ascending
    frequencies: np.ndarray  # sqrt(lambda)
    residues: np.ndarray  # (K, S, S): sum_l phi_l phi_l^T / (2 sqrt(lambda)); zero mode: phi phi^T
    ranks: np.ndarray
    unresolved: np.ndarray  # bool per pole: gap to a neighbour below the resolution limit
    psd_distance: np.ndarray  # norm of the clipped negative part, per pole
    vertices: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    meta: dict = field(default_factory=dict)

    def spectral_gram(self, k: int) -> np.ndarray:
        """``sum_l phi_l phi_l^T`` on Sigma for pole k."""
        if self.frequencies[k] == 0:
            return self.residues[k]
        return 2 * self.frequencies[k] * self.residues[k]

    def to_json(self) -> dict:
        return {"lambdas": self.lambdas.tolist(), "ranks": self.ranks.tolist(),
                "unresolved": self.unresolved.tolist(),
                "psd_distance": self.psd_distance.tolist(),
                "residues": self.residues.tolist(), "vertices": self.vertices.tolist()}


def simulate_green(man: DiscreteManifold, sigma: Hypersurface, T: float, dt: float) -> GreenRecord:
    """Leapfrog from zero displacement and velocity ``delta_y / m_y`` for each y on Sigma."""
    from .transmission_oracle import cfl_limit

    if dt > cfl_limit(man):
        raise GreenError(f"dt = {dt:g} exceeds the CFL limit {cfl_limit(man):g}")
    verts = sigma.vertices
    S = verts.size
    n_steps = int(round(T / dt))
    K = man.stiffness.tocsr()
    minv = 1.0 / man.mass
    # all source columns advance together
    u_prev = np.zeros((man.vertex_count, S))
    u = np.zeros((man.vertex_count, S))
    u[verts, np.arange(S)] = dt * minv[verts]
    out = np.zeros((n_steps + 1, S, S))
    out[1] = u[verts]
    for n in range(2, n_steps + 1):
        u_prev, u = u, 2 * u - u_prev - dt * dt * (minv[:, None] * (K @ u))
        out[n] = u[verts]
    out = 0.5 * (out + out.transpose(0, 2, 1))
    coords = man.vertex_coords[verts] if man.vertex_coords is not None else np.zeros((S, 1))
    return GreenRecord(verts.copy(), out, dt, sigma.manifold_id, sigma.components,
                       sigma.surface_weights.copy(), coords)


def synthetic_record(lambdas, grams, dt: float, T: float, vertices=None) -> GreenRecord:
    """Record of the continuous-time series with given eigenvalues and Sigma Gram matrices."""
    grams = np.asarray(grams, dtype=float)
    t = dt * np.arange(int(round(T / dt)) + 1)
    out = np.zeros((t.size,) + grams.shape[1:])
    for lam, P in zip(lambdas, grams):
        w = np.sqrt(max(lam, 0.0))
        f = t if w == 0 else np.sin(w * t) / w
        out += f[:, None, None] * P[None]
    verts = np.arange(grams.shape[1]) if vertices is None else np.asarray(vertices)
    return GreenRecord(verts, out, dt, leapfrog=False)


def _channels(record: GreenRecord) -> np.ndarray:
    S = record.samples.shape[1]
    iu = np.triu_indices(S)
    return record.samples[:, iu[0], iu[1]]  # (n_t, S(S+1)/2)


def _signal_subspace(Y: np.ndarray, L: int) -> tuple[np.ndarray, np.ndarray]:
    """Left singular vectors and values of the stacked block Hankel matrix.

    Each channel contributes an L x (n_t - L + 1) Hankel block; the R factor of
    the transposed stack is accumulated block by block so that the singular
    values are not squared.
    """
    n_t, C = Y.shape
    R = np.zeros((0, L))
    for c in range(C):
        H = np.lib.stride_tricks.sliding_window_view(Y[:, c], L)  # (n_t-L+1, L)
        R = np.linalg.qr(np.vstack([R, H]), mode="r")
    U, s, _ = np.linalg.svd(R.T)
    return U, s


def poles_and_residues(record: GreenRecord, n_max: int | None = None, L: int | None = None,
                       rtol: float = 1e-9, rank_tol: float = 1e-6,
                       resolution: float = 8 * 2 * np.pi, zero_tol: float = 1e-6,
                       taper: float = 14.0) -> PoleSet:
    """Frequencies and Sigma x Sigma residues of a Green record.

    Parameters
    ----------
    n_max : keep the lowest n_max distinct eigenvalues (all if None)
    L : Hankel depth; must exceed the number of poles in the record
    rtol : singular values below ``rtol * s_max`` are noise
    rank_tol : residue eigenvalues below ``rank_tol`` times the largest count
        as zero when estimating multiplicity
    resolution : poles closer than ``resolution / T`` in frequency are flagged
    taper : Kaiser window parameter for the amplitude fit (0 disables it)
    """
    Y = _channels(record)
    n_t = Y.shape[0]
    dt = record.dt
    if L is None:
        L = min(n_t // 3, 400)
    U, s = _signal_subspace(Y, L)
    r = int(np.sum(s > rtol * s[0]))
    if r >= L - 1:
        raise GreenError(f"signal rank {r} fills the Hankel depth {L}; increase L")
    Ur = U[:, :r]
    Phi = np.linalg.lstsq(Ur[:-1], Ur[1:], rcond=None)[0]
    z = np.linalg.eigvals(Phi)
    ang = np.abs(np.angle(z))
    om_d = np.sort(ang[np.imag(z) >= -1e-14 * np.abs(z)]) / dt  # discrete angular rates
    # merge conjugate duplicates and the double root at z = 1
    distinct = []
    for w in om_d:
        if w * dt < zero_tol:
            w = 0.0
        if distinct and abs(w - distinct[-1]) <= max(zero_tol / dt, 1e-9 * w):
            continue
        distinct.append(w)
    om_d = np.asarray(distinct)
    has_zero = om_d.size > 0 and om_d[0] == 0.0
    pos = om_d[om_d > 0]
    t = record.times
    cols = [np.ones_like(t), t]
    for w in pos:
        cols += [np.sin(w * t), np.cos(w * t)]
    B = np.stack(cols, axis=1)
    # a tapered fit keeps poorly resolved high clusters from leaking downwards
    win = np.kaiser(t.size, taper)[:, None] if taper > 0 else np.ones((t.size, 1))
    coef = np.linalg.lstsq(win * B, win * Y, rcond=None)[0]
    S = record.samples.shape[1]
    iu = np.triu_indices(S)

    def unpack(v):
        M = np.zeros((S, S))
        M[iu] = v
        return M + np.triu(M, 1).T

    if record.leapfrog:
        lam = (2.0 / dt) ** 2 * np.sin(0.5 * pos * dt) ** 2
        scale = np.sin(pos * dt) / dt  # sin amplitude dt/sin(W dt) per unit Gram
    else:
        lam = pos ** 2
        scale = pos
    lambdas, grams = [], []
    if has_zero:
        lambdas.append(0.0)
        grams.append(unpack(coef[1]))
    for k in range(pos.size):
        lambdas.append(lam[k])
        grams.append(unpack(coef[2 + 2 * k]) * scale[k])
    lambdas = np.asarray(lambdas)
    grams = np.asarray(grams)
    order = np.argsort(lambdas)
    lambdas, grams = lambdas[order], grams[order]
    freqs = np.sqrt(np.clip(lambdas, 0.0, None))
    if n_max is not None:
        lambdas, grams, freqs = lambdas[:n_max], grams[:n_max], freqs[:n_max]
    top = max(float(np.abs(np.linalg.eigvalsh(g)).max()) for g in grams) if grams.size else 1.0
    residues, ranks, psd = [], [], []
    for lam_k, g, w in zip(lambdas, grams, freqs):
        e, V = np.linalg.eigh(0.5 * (g + g.T))
        psd.append(float(np.linalg.norm(np.clip(e, None, 0.0))))
        e = np.clip(e, 0.0, None)
        ranks.append(int(np.sum(e > rank_tol * top)))
        P = (V * e) @ V.T
        residues.append(P if w == 0 else P / (2 * w))
    gaps = np.diff(freqs)
    limit = resolution / max(record.duration, 1e-300)
    unresolved = np.zeros(freqs.size, dtype=bool)
    unresolved[:-1] |= gaps < limit
    unresolved[1:] |= gaps < limit
    return PoleSet(lambdas, freqs, np.asarray(residues).reshape(-1, S, S), np.asarray(ranks),
                   unresolved, np.asarray(psd), np.asarray(record.vertices),
                   {"signal_rank": r, "hankel_depth": L})


def residues_to_spectral_data(poles: PoleSet, record: GreenRecord | None = None,
                              neg_tol: float = 1e-8) -> SpectralDataset:
    """Dirichlet dataset whose traces reproduce every eigenspace Gram matrix."""
    S = poles.residues.shape[1]
    lambdas, rows = [], []
    for k in range(poles.lambdas.size):
        G = poles.spectral_gram(k)
        e, V = np.linalg.eigh(0.5 * (G + G.T))
        if e.min() < -neg_tol * max(e.max(), 1e-300):
            raise GreenError(f"residue {k} has a negative eigenvalue {e.min():.3g}")
        r = max(int(poles.ranks[k]), 1)
        for i in range(1, r + 1):
            lambdas.append(poles.lambdas[k])
            rows.append(np.sqrt(max(e[-i], 0.0)) * V[:, -i])
    meta = record if record is not None else None
    components = tuple(meta.components) if meta is not None and meta.components else (
        tuple(int(v) for v in poles.vertices),)
    weights = meta.weights if meta is not None and meta.weights is not None else np.ones(S)
    coords = meta.coords if meta is not None and meta.coords is not None else np.zeros((S, 1))
    mid = meta.manifold_id if meta is not None else ""
    return SpectralDataset("dirichlet", mid, components, np.asarray(weights, dtype=float),
                           np.asarray(coords, dtype=float), np.asarray(lambdas),
                           np.asarray(rows).reshape(-1, S))


def eigenspace_grams(data: SpectralDataset, rtol: float = 1e-8) -> tuple[np.ndarray, np.ndarray]:
    """Distinct eigenvalues and the Sigma Gram matrix of each eigenspace."""
    lam = data.lambdas
    out_l, out_g = [], []
    i = 0
    while i < lam.size:
        j = i + 1
        while j < lam.size and lam[j] - lam[i] <= rtol * max(1.0, abs(lam[i])):
            j += 1
        T = data.traces[i:j]
        out_l.append(float(lam[i:j].mean()))
        out_g.append(T.T @ T)
        i = j
    return np.asarray(out_l), np.asarray(out_g)
