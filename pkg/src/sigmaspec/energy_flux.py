"""Energy pumped into a piece of M through its boundary, from spectral data.

Given Dirichlet boundary data F on the part of Sigma bounding a piece, the
h-jump source ``h_F`` whose wave has trace F there makes that wave solve the
Dirichlet problem on the piece.  Its energy at time T is then a sum over the
piece's extended eigenfunctions.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .blago import blago_coefficients, sigma_trace
from .manifold_forge import DiscreteManifold, Hypersurface, SpectralDataset, region_vertices
from .signals import SourceSignal, _k1, _k2, _k3
from .subdomain_spectra import AssignedSpectra

# piece -> Sigma components that bound it
BOUNDING = {"S1": (0,), "M\\S1": (0,), "S2": (1,), "M\\S2": (1,), "M\\S": (0, 1)}


class FluxError(ValueError):
    pass


@dataclass(frozen=True)
class FluxRecord:
    region: str
    T: float
    flux: float
    w: np.ndarray  # (n_modes,) coefficients at T
    dw: np.ndarray
    h_F: SourceSignal
    roundtrip: float  # max |trace(h_F) - F| at the nodes, relative
    eps_reg: float = 1e-10

    def to_json(self) -> dict:
        return {"region": self.region, "T": self.T, "flux": self.flux,
                "w": self.w.tolist(), "dw": self.dw.tolist(), "roundtrip": self.roundtrip,
                "eps_reg": self.eps_reg}


def bounding_slots(data: SpectralDataset, region: str) -> np.ndarray:
    try:
        comps = BOUNDING[region]
    except KeyError:
        raise FluxError(f"unknown region {region!r}") from None
    return np.concatenate([data.component_slots(k) for k in comps])


def solve_hF(data: SpectralDataset, F: SourceSignal, T: float | None = None,
             dt: float | None = None, eps_reg: float = 1e-10) -> tuple[SourceSignal, float]:
    """h-jump source on the scope of F whose wave has trace F there.

    The trace equation is differentiated twice in time.  Each mode obeys
    ``u_j'' = h_j - lam_j u_j``, so ``F'' = A h - sum_j lam_j tr_j u_j`` with
    ``A = sum_j tr_j tr_j^T W``: a Volterra equation of the second kind,
    marched node by node with ``h`` linear between nodes and the modal
    states advanced exactly.  Matching the trace itself (first kind) is
    unstable for piecewise-linear ``h`` because the trace kernel vanishes
    at zero lag.  ``F''`` is the centred second difference of the samples.

    A piecewise-linear F has kinks, so the exact ``h_F`` carries impulses
    there; with ``dt`` below F's own step they show up as spikes.  The
    trace still matches, but ``h_F`` is then only meaningful in the mean.

    Returns
    -------
    h_F : SourceSignal
    roundtrip : max trace mismatch at the nodes, relative to max |F|
    """
    dt = F.dt if dt is None else dt
    t_end = F.t_end if T is None else T
    n = int(np.ceil((t_end - F.t_start) / dt - 1e-9))
    if n < 1:
        raise FluxError("time window shorter than one step")
    slots = F.scope
    times = F.t_start + dt * np.arange(n + 2)
    Fv = F.at(np.concatenate([[F.t_start - dt], times]))
    acc = (Fv[2:] - 2 * Fv[1:-1] + Fv[:-2]) / dt ** 2  # at times[:n+1]
    acc[0] = 0.0
    lam = np.clip(data.lambdas, 0.0, None)
    om = np.sqrt(lam)
    tr = data.traces[:, slots]  # (J, s)
    trw = tr * data.weights[slots][None, :]
    c, s1, k2, k3 = np.cos(om * dt), _k1(om, dt), _k2(om, dt), _k3(om, dt)
    a_coef, b_coef = k2 - k3 / dt, k3 / dt  # weights of the segment's end values
    sinc = 1.0 - lam * b_coef
    A = tr.T @ (sinc[:, None] * trw)
    A = A + eps_reg * np.linalg.norm(A, 2) * np.eye(slots.size)
    lu = scipy.linalg.lu_factor(A)
    h = np.zeros((n + 1, slots.size))
    u = np.zeros(data.J)
    du = np.zeros(data.J)
    ya = np.zeros(data.J)
    for k in range(1, n + 1):
        u_p = u * c + du * s1 + ya * a_coef
        du_p = -u * lam * s1 + du * c + ya * (s1 - k2 / dt)
        h[k] = scipy.linalg.lu_solve(lu, acc[k] + tr.T @ (lam * u_p))
        yb = trw @ h[k]
        u = u_p + yb * b_coef
        du = du_p + yb * k2 / dt
        ya = yb
    hF = SourceSignal(h, dt, F.t_start, slots)
    got = sigma_trace(data, hF, times[:n + 1])[:, slots]
    scale = max(float(np.abs(F.samples).max()), 1e-300)
    return hF, float(np.abs(got - Fv[1:n + 2]).max() / scale)


def energy_flux(data: SpectralDataset, assigned: AssignedSpectra, region: str,
                F: SourceSignal, T: float, hF: SourceSignal | None = None,
                margin: float = 0.0, eps_reg: float = 1e-10) -> FluxRecord:
    """Energy at time T of the Dirichlet wave with boundary data F on ``region``.

    ``w_n = sum_j kappa_{n,j} u_j(T)`` over the region's extended eigenfunctions
    and the energy is ``1/2 sum_n (w_n'^2 + lam_n w_n^2)``.  F must have
    ended ``margin`` before T, so that the energy no longer changes.
    """
    if F.t_end + margin > T:
        raise FluxError(f"F ends at {F.t_end:g}, after T - margin = {T - margin:g}")
    roundtrip = 0.0
    if hF is None:
        hF, roundtrip = solve_hF(data, F, T, eps_reg=eps_reg)
    kap = assigned.kappas[region]
    lam = assigned.values[region]
    if kap.shape[1] == 0:
        raise FluxError(f"no eigenvalues assigned to {region}")
    kap = kap / np.linalg.norm(kap, axis=0)[None, :]
    c = blago_coefficients(data, hF, T, "h")
    w = c.values[0] @ kap
    dw = c.rates[0] @ kap
    flux = 0.5 * float(np.sum(dw ** 2 + lam * w ** 2))
    return FluxRecord(region, float(T), flux, w, dw, hF, roundtrip, eps_reg)


# ---------------------------------------------------------------------------
# oracles: leapfrog on the piece and on its complement


def _boundary_vertices(sigma: Hypersurface, region: str) -> np.ndarray:
    return np.concatenate([sigma.component_vertices(k) for k in BOUNDING[region]])


def _complement(region: str) -> str:
    return {"S1": "M\\S1", "M\\S1": "S1", "S2": "M\\S2", "M\\S2": "S2"}[region]


def oracle_energy(man: DiscreteManifold, sigma: Hypersurface, region: str, F: SourceSignal,
                  T: float, dt: float) -> float:
    """Dirichlet energy ``1/2 (u'^T M u' + u^T K u)`` on the piece at time T."""
    from .transmission_oracle import solve_dirichlet_ibvp

    inner = region_vertices(sigma, region)
    bnd = _boundary_vertices(sigma, region)
    _, frames, vels, bvals = solve_dirichlet_ibvp(man, inner, bnd, lambda t: F.at([t])[0], T, dt)
    u, du, g = frames[-1], vels[-1], bvals[-1]
    K = man.stiffness.tocsr()
    idx = np.concatenate([inner, bnd])
    full = np.concatenate([u, g])
    Kr = K[idx][:, idx]
    pot = 0.5 * float(full @ (Kr @ full))
    kin = 0.5 * float(np.sum(man.mass[inner] * du ** 2))
    return kin + pot


def oracle_hF(man: DiscreteManifold, sigma: Hypersurface, region: str, F: SourceSignal,
              T: float, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Flux jump across the bounding part of Sigma of the two Dirichlet waves.

    Returns (times, h) with h of shape (n_t, |scope|).
    """
    from .transmission_oracle import solve_dirichlet_ibvp

    bnd = _boundary_vertices(sigma, region)
    g = lambda t: F.at([t])[0]  # noqa: E731
    pieces = [region_vertices(sigma, region), region_vertices(sigma, _complement(region))]
    u = np.zeros((0, man.vertex_count))
    times = None
    for inner in pieces:
        times, frames, _, bvals = solve_dirichlet_ibvp(man, inner, bnd, g, T, dt)
        if u.size == 0:
            u = np.zeros((times.size, man.vertex_count))
        u[:, inner] = frames
        u[:, bnd] = bvals
    K = man.stiffness.tocsr()[bnd]
    # F is linear between its samples: difference on its own step, not dt
    d = F.dt
    acc = (F.at(times + d) - 2 * F.at(times) + F.at(times - d)) / d ** 2
    pos = {int(v): i for i, v in enumerate(sigma.vertices)}
    w = sigma.surface_weights[[pos[int(v)] for v in bnd]]
    h = ((K @ u.T).T + man.mass[bnd][None, :] * acc) / w[None, :]
    return times, h
