"""Ground-truth transmission solvers with prescribed jumps across Sigma.

Fields keep two copies of every Sigma vertex.  In the frequency domain the
unknowns are the off-Sigma values plus ``u_plus`` and ``u_minus`` at Sigma, and
the Sigma rows impose

    u_plus - u_minus = f,
    [(K_plus - lam M_plus) u_plus_ext + (K_minus - lam M_minus) u_minus_ext](x) = w_x h(x).

In time the same system is stepped through its average ``v = (u_plus +
u_minus)/2``, which obeys ``M v'' + K v = W h - N^T W f`` with N the centered
flux; the copies are ``v +/- f/2``.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .manifold_forge import DiscreteManifold, EigenBasis, Hypersurface
from .signals import SourceSignal


class OracleError(ValueError):
    pass


@dataclass(frozen=True)
class Field:
    values: np.ndarray  # per vertex; Sigma entries hold the average of the copies
    plus: np.ndarray  # Sigma copies on the M_plus side
    minus: np.ndarray  # Sigma copies on the M_minus side
    lam: complex

    @property
    def jump(self) -> np.ndarray:
        return self.plus - self.minus

    def side_vector(self, sigma: Hypersurface, side: int) -> np.ndarray:
        v = self.values.copy()
        v[sigma.vertices] = self.plus if side > 0 else self.minus
        return v


def normal_traces(sigma: Hypersurface, fld: Field) -> tuple[np.ndarray, np.ndarray]:
    """One-sided normal derivatives (M_plus, M_minus) of a field at Sigma."""
    up = fld.side_vector(sigma, +1)
    um = fld.side_vector(sigma, -1)
    return sigma.flux_plus(fld.lam) @ up, sigma.flux_minus(fld.lam) @ um


def spectral_gap(lam: complex, eigenvalues: np.ndarray) -> float:
    return float(np.min(np.abs(np.asarray(eigenvalues) - lam)))


def solve_transmission_frequency(man: DiscreteManifold, sigma: Hypersurface, f, h,
                                 lam: complex, eigenvalues: np.ndarray | None = None,
                                 delta_gap: float | None = None) -> Field:
    """Solve the duplicated-node transmission system at spectral parameter ``lam``."""
    if eigenvalues is not None:
        lam_max = float(np.max(eigenvalues))
        gap_tol = 1e-6 * lam_max if delta_gap is None else delta_gap
        if spectral_gap(lam, eigenvalues) < gap_tol:
            raise OracleError(f"lambda={lam} lies within {gap_tol:.3g} of the spectrum")
    N, S = man.vertex_count, sigma.size
    f = np.zeros(S) if f is None else np.asarray(f)
    h = np.zeros(S) if h is None else np.asarray(h)
    off = np.flatnonzero(sigma.labels >= 0)
    pos = -np.ones(N, dtype=int)
    pos[off] = np.arange(off.size)
    n_off = off.size
    # unknown layout: [off-Sigma | u_plus (S) | u_minus (S)]
    P = n_off + np.arange(S)
    Mi = n_off + S + np.arange(S)
    side = sigma.side
    dtype = complex if np.iscomplexobj(lam) or np.iscomplexobj(f) or np.iscomplexobj(h) else float
    Ap = (sigma.K_plus - lam * sp.diags(sigma.mass_plus)).tocsr()
    Am = (sigma.K_minus - lam * sp.diags(sigma.mass_minus)).tocsr()
    sig_slot = -np.ones(N, dtype=int)
    sig_slot[sigma.vertices] = np.arange(S)

    def column(v, plus_side):
        if sig_slot[v] >= 0:
            return P[sig_slot[v]] if plus_side else Mi[sig_slot[v]]
        return pos[v]

    rows, cols, vals = [], [], []
    rhs = np.zeros(n_off + 2 * S, dtype=dtype)
    for A, sgn in ((Ap, 1), (Am, -1)):
        coo = A.tocoo()
        for r, c, a in zip(coo.row, coo.col, coo.data):
            if sig_slot[r] >= 0:
                continue
            if side[r] != sgn:
                continue
            rows.append(pos[r])
            cols.append(column(c, sgn > 0))
            vals.append(a)
    # Sigma flux-balance rows
    for A, plus_side in ((Ap, True), (Am, False)):
        sub = A[sigma.vertices].tocoo()
        for r, c, a in zip(sub.row, sub.col, sub.data):
            rows.append(P[r])
            cols.append(column(c, plus_side))
            vals.append(a)
    rhs[P] = sigma.surface_weights * h
    # jump rows
    rows.extend(Mi.tolist())
    cols.extend(P.tolist())
    vals.extend([1.0] * S)
    rows.extend(Mi.tolist())
    cols.extend(Mi.tolist())
    vals.extend([-1.0] * S)
    rhs[Mi] = f
    A = sp.csr_matrix((np.asarray(vals, dtype=dtype), (rows, cols)),
                      shape=(n_off + 2 * S, n_off + 2 * S))
    x = spla.spsolve(A.tocsc(), rhs)
    res = np.linalg.norm(A @ x - rhs) / max(np.linalg.norm(rhs), 1e-300)
    if np.linalg.norm(rhs) > 0 and res > 1e-10:
        raise OracleError(f"transmission solve residual {res:.3e}")
    values = np.zeros(N, dtype=x.dtype)
    values[off] = x[:n_off]
    up, um = x[P], x[Mi]
    values[sigma.vertices] = 0.5 * (up + um)
    return Field(values, up, um, lam)


# ---------------------------------------------------------------------------
# time domain


@dataclass(frozen=True)
class SpaceTimeField:
    frames: np.ndarray  # (n_frames, N), averaged Sigma values
    plus: np.ndarray  # (n_frames, S)
    minus: np.ndarray  # (n_frames, S)
    dt: float
    t0: float
    velocity: np.ndarray | None = None  # (n_frames, N) centered differences

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.frames.shape[0])

    @property
    def duration(self) -> float:
        return self.dt * (self.frames.shape[0] - 1)

    def frame_at(self, t: float) -> int:
        k = int(round((t - self.t0) / self.dt))
        if not 0 <= k < self.frames.shape[0] or abs(self.t0 + k * self.dt - t) > 1e-9 * max(1, abs(t)):
            raise OracleError(f"time {t} is not a stored frame")
        return k


def energy(man: DiscreteManifold, u: np.ndarray, du: np.ndarray) -> float:
    return 0.5 * float(du @ (man.mass * du) + u @ (man.stiffness @ u))


def cfl_limit(man: DiscreteManifold) -> float:
    """Largest stable leapfrog step, 2/sqrt(lambda_max) bounded via Gershgorin."""
    d = np.asarray(abs(man.stiffness).sum(axis=1)).ravel() / man.mass
    return 2.0 / np.sqrt(d.max())


def min_spacing(man: DiscreteManifold) -> float:
    return float(man.edge_lengths.min())


def solve_transmission_time(man: DiscreteManifold, sigma: Hypersurface,
                            f: SourceSignal | None, h: SourceSignal | None, T: float,
                            dt: float, cfl: float = 0.5, store_every: int = 1,
                            t0: float | None = None) -> SpaceTimeField:
    """Leapfrog for the wave transmission problem with jumps f and h.

    The field is identically zero before ``min(t_f, t_h)``.  ``dt`` must obey
    ``dt <= cfl * min spacing``; ``cfl`` is capped by the true stability limit.
    """
    if dt > cfl * min_spacing(man) or dt >= cfl_limit(man):
        raise OracleError(f"dt={dt} violates the CFL bound (c={cfl})")
    S = sigma.size
    starts = [s.t_start for s in (f, h) if s is not None]
    if t0 is None:
        t0 = min(starts) if starts else 0.0
    n_steps = int(round((T - t0) / dt))
    W = sigma.surface_weights
    Nc = sigma.centered_flux()
    minv = 1.0 / man.mass
    K = man.stiffness
    verts = sigma.vertices

    def load(t):
        b = np.zeros(man.vertex_count)
        if h is not None:
            b[verts] += W * h.at(np.array([t]), S)[0]
        if f is not None:
            b -= Nc.T @ (W * f.at(np.array([t]), S)[0])
        return b

    def jump(t):
        return np.zeros(S) if f is None else f.at(np.array([t]), S)[0]

    u_prev = np.zeros(man.vertex_count)
    # start from rest at t0: first step uses u(t0 + dt) = dt^2/2 * a(t0)
    u = 0.5 * dt * dt * minv * load(t0)
    frames = [u_prev.copy()]
    vel = [np.zeros(man.vertex_count)]
    times = [t0]
    for n in range(1, n_steps + 1):
        t = t0 + n * dt
        u_next = 2 * u - u_prev + dt * dt * minv * (load(t) - K @ u)
        if n % store_every == 0:
            frames.append(u.copy())
            vel.append((u_next - u_prev) / (2 * dt))
            times.append(t)
        u_prev, u = u, u_next
    frames = np.asarray(frames)
    vel = np.asarray(vel)
    times = np.asarray(times)
    jumps = np.array([jump(t) for t in times])
    avg = frames[:, verts]
    return SpaceTimeField(frames, avg + 0.5 * jumps, avg - 0.5 * jumps, dt * store_every, t0,
                          vel)


def solve_dirichlet_ibvp(man: DiscreteManifold, interior: np.ndarray, boundary: np.ndarray,
                         g, T: float, dt: float, t0: float = 0.0, mass=None, stiffness=None,
                         store_every: int = 1):
    """Leapfrog on ``interior`` vertices with boundary values ``g(t)`` on ``boundary``.

    ``mass``/``stiffness`` default to the manifold forms; pass half-cell forms to
    step a one-sided piece.  Returns (times, interior frames, velocities, full-vector
    frames over interior+boundary ordering).
    """
    K = (man.stiffness if stiffness is None else stiffness).tocsr()
    m = man.mass if mass is None else mass
    Kii = K[interior][:, interior]
    Kib = K[interior][:, boundary]
    minv = 1.0 / m[interior]
    n_steps = int(round((T - t0) / dt))
    u_prev = np.zeros(interior.size)
    u = 0.5 * dt * dt * minv * (-(Kib @ g(t0)))
    times, frames, vels, bvals = [t0], [u_prev.copy()], [np.zeros(interior.size)], [g(t0)]
    for n in range(1, n_steps + 1):
        t = t0 + n * dt
        gb = g(t)
        u_next = 2 * u - u_prev - dt * dt * minv * (Kii @ u + Kib @ gb)
        if n % store_every == 0:
            times.append(t)
            frames.append(u.copy())
            vels.append((u_next - u_prev) / (2 * dt))
            bvals.append(gb)
        u_prev, u = u, u_next
    return np.asarray(times), np.asarray(frames), np.asarray(vels), np.asarray(bvals)


def write_frame_stream(path, fld: SpaceTimeField) -> None:
    """Binary frame stream: magic, n_frames, n_values, dt, t0 then float64 frames."""
    with open(path, "wb") as fh:
        fh.write(b"SGMF")
        fh.write(struct.pack("<qqdd", fld.frames.shape[0], fld.frames.shape[1], fld.dt, fld.t0))
        fh.write(np.ascontiguousarray(fld.frames, dtype="<f8").tobytes())


def read_frame_stream(path) -> tuple[np.ndarray, float, float]:
    with open(path, "rb") as fh:
        if fh.read(4) != b"SGMF":
            raise OracleError("not a frame stream")
        nf, nv, dt, t0 = struct.unpack("<qqdd", fh.read(32))
        data = np.frombuffer(fh.read(), dtype="<f8").reshape(nf, nv)
    return data.copy(), dt, t0


# ---------------------------------------------------------------------------
# full-knowledge layer potentials


def _resolvent_weights(basis: EigenBasis, lam: complex) -> np.ndarray:
    return 1.0 / (basis.lambdas - lam)


def layer_potentials(basis: EigenBasis, sigma: Hypersurface, density, lam: complex,
                     kind: str) -> np.ndarray:
    """Sigma traces of S, D-principal or J-principal applied to ``density``.

    All three are finite spectral sums over the basis.  ``G = sum phi phi /
    (lam_j - lam)`` so that the single layer solves ``(K - lam M) u = W h``.
    """
    if basis.J < basis.modes.shape[0]:
        import warnings

        warnings.warn("truncated basis: non-convergent regime for layer potentials",
                      stacklevel=2)
    density = np.asarray(density)
    w = sigma.surface_weights
    tr = basis.modes[sigma.vertices]  # (S, J)
    nt = np.asarray(sigma.centered_flux() @ basis.modes)  # (S, J)
    r = _resolvent_weights(basis, lam)
    if kind == "S":
        return tr @ (r * (tr.T @ (w * density)))
    if kind == "D":
        return tr @ (r * (nt.T @ (w * density)))
    if kind == "J":
        return nt @ (r * (tr.T @ (w * density)))
    raise OracleError(f"unknown potential kind {kind!r}")


def layer_potential_matrix(basis: EigenBasis, sigma: Hypersurface, lam: complex,
                           kind: str) -> np.ndarray:
    S = sigma.size
    return np.stack([layer_potentials(basis, sigma, e, lam, kind) for e in np.eye(S)], axis=1)


def single_layer_field(basis: EigenBasis, sigma: Hypersurface, h, lam: complex) -> np.ndarray:
    tr = basis.modes[sigma.vertices]
    r = _resolvent_weights(basis, lam)
    return basis.modes @ (r * (tr.T @ (sigma.surface_weights * np.asarray(h))))


def double_layer_field(basis: EigenBasis, sigma: Hypersurface, f, lam: complex) -> np.ndarray:
    nt = np.asarray(sigma.centered_flux() @ basis.modes)
    r = _resolvent_weights(basis, lam)
    return basis.modes @ (r * (nt.T @ (sigma.surface_weights * np.asarray(f))))


def neumann_to_dirichlet_oracle(man: DiscreteManifold, sigma: Hypersurface, side: int,
                                lam: float) -> np.ndarray:
    """Direct ND matrix of M_minus (side=-1) or M_plus (side=+1) with outward flux data."""
    region = np.flatnonzero(sigma.side == side)
    verts = np.concatenate([region, sigma.vertices])
    A = (sigma.K_minus if side < 0 else sigma.K_plus)
    mass = sigma.mass_minus if side < 0 else sigma.mass_plus
    B = (A - lam * sp.diags(mass)).tocsr()[verts][:, verts].toarray()
    S = sigma.size
    rhs = np.zeros((verts.size, S))
    rhs[region.size:, :] = np.diag(sigma.surface_weights)
    sol = np.linalg.solve(B, rhs)
    return sol[region.size:, :]
