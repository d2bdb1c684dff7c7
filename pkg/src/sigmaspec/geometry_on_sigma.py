"""Distances on Sigma from heat kernels built out of Dirichlet spectral data.

Small-time heat asymptotics give ``-4 t log H(x, y; t) -> d_M(x, y)^2``.  We
remove the Euclidean prefactor first, ``D(t) = -4 t log((4 pi t)^(m/2) H)``, so
that what is left is smooth in t and a straight-line fit extrapolates to t=0.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components, dijkstra

from .manifold_forge import DiscreteManifold, SpectralDataset


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class DistanceMatrix:
    labels: np.ndarray  # Sigma vertex ids
    values: np.ndarray
    kind: str  # "ambient" | "intrinsic"
    error: np.ndarray | None = None  # per-pair error estimate (ambient)
    flagged: tuple = field(default_factory=tuple)  # pairs with unusable heat values

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise GeometryError("distance matrix must be square")
        if np.any(np.diag(v) != 0):
            raise GeometryError("distance matrix needs a zero diagonal")
        finite = np.isfinite(v)
        if np.any(v[finite] < 0) or not np.allclose(v[finite], v.T[finite]):
            raise GeometryError("distance matrix must be symmetric and nonnegative")

    def to_json(self) -> dict:
        out = {"kind": self.kind, "labels": [int(x) for x in self.labels],
               "values": self.values.tolist(), "flagged": [list(p) for p in self.flagged]}
        if self.error is not None:
            out["error"] = self.error.tolist()
        return out

    def triangle_violation(self) -> float:
        v = self.values
        worst = 0.0
        for k in range(v.shape[0]):
            worst = max(worst, float(np.max(v - (v[:, [k]] + v[[k], :]))))
        return worst


def heat_trace_matrix(data: SpectralDataset, t: float) -> tuple[np.ndarray, float]:
    """``H(x, y; t)`` on Sigma x Sigma and a bound on the truncated tail.

    The bound is ``exp(-lam_J t)`` times the largest squared trace row norm;
    it is informative only when the omitted traces are no larger than the
    kept ones.
    """
    if t <= 0:
        raise GeometryError("heat time must be positive")
    e = np.exp(-data.lambdas * t)
    H = data.traces.T @ (e[:, None] * data.traces)
    tail = float(np.exp(-data.lambdas[-1] * t) * np.max(np.sum(data.traces ** 2, axis=1)))
    return 0.5 * (H + H.T), tail


def _fit_line(ts: np.ndarray, ds: np.ndarray) -> tuple[float, float]:
    A = np.stack([np.ones_like(ts), ts], axis=1)
    coef, *_ = np.linalg.lstsq(A, ds, rcond=None)
    resid = ds - A @ coef
    return float(coef[0]), float(np.sqrt(np.mean(resid ** 2)) if ts.size > 2 else 0.0)


def mesh_scale(data: SpectralDataset, dim: int) -> float:
    """Grid spacing implied by the top eigenvalue (``lam_max ~ 4 dim / h^2``)."""
    return 2.0 * math.sqrt(dim / data.lambdas[-1])


def _window(d2, h, max_ratio, lattice, span, n):
    """Fit times for squared distance d2: short enough to avoid other
    geodesics, long enough for the kernel to be Gaussian at mesh scale h."""
    t_lo = max(d2 / (4 * max_ratio), lattice * math.sqrt(d2) * h, 1e-300)
    return np.geomspace(t_lo, span * t_lo, n)


def varadhan_distances(data: SpectralDataset, t_grid=None, dim: int = 1,
                       n_times: int = 6, floor: float = 1e-12, truncation_limit: float = 0.1,
                       max_ratio: float = 8.0, lattice: float = 1.0, span: float = 3.0,
                       mesh: float | None = None) -> DistanceMatrix:
    """Ambient distances between Sigma vertices from short-time heat values.

    With ``t_grid`` given, every pair is fitted over that grid.  Without it
    each pair gets its own window starting at
    ``max(d^2 / (4 max_ratio), lattice * d * h)`` and spanning a factor
    ``span``.  The first bound keeps the kernel far above rounding; the second
    keeps the mesh correction ``~ d^2 h^2 / (12 t^2)`` to the squared distance
    small.  ``h`` defaults to the scale implied by the largest eigenvalue.
    """
    S = data.sigma_size
    labels = np.arange(S)
    D = np.zeros((S, S))
    err = np.zeros((S, S))
    flagged = []
    lam = data.lambdas
    tr = data.traces

    def heat_pairs(ts, iu, ju):
        e = np.exp(-np.outer(ts, lam))  # (n_t, J)
        return e @ (tr[:, iu] * tr[:, ju])  # (n_t, n_pairs)

    iu, ju = np.triu_indices(S, k=1)
    if iu.size == 0:
        return DistanceMatrix(labels, D, "ambient", err)
    if t_grid is not None:
        ts = np.sort(np.asarray(t_grid, dtype=float))
        if np.any(ts <= 0):
            raise GeometryError("heat times must be positive")
        Hs = heat_pairs(ts, iu, ju)
        tails = np.exp(-lam[-1] * ts) * np.max(np.sum(tr ** 2, axis=1))
        for p, (i, j) in enumerate(zip(iu, ju)):
            ok = (Hs[:, p] > floor) & (tails < truncation_limit * np.abs(Hs[:, p]))
            if ok.sum() < 2:
                flagged.append((int(i), int(j)))
                D[i, j] = D[j, i] = np.nan
                continue
            dd = -4 * ts[ok] * np.log((4 * math.pi * ts[ok]) ** (dim / 2) * Hs[ok, p])
            c0, r = _fit_line(ts[ok], dd)
            D[i, j] = D[j, i] = math.sqrt(max(c0, 0.0))
            err[i, j] = err[j, i] = r / max(2 * D[i, j], 1e-300)
        return DistanceMatrix(labels, D, "ambient", err, tuple(flagged))

    # first estimate: the smallest time at which every pair is still resolvable
    t_probe = _probe_time(lam, tr, iu, ju, floor)
    H0 = heat_pairs(np.array([t_probe]), iu, ju)[0]
    h_mesh = mesh_scale(data, dim) if mesh is None else mesh
    for p, (i, j) in enumerate(zip(iu, ju)):
        if H0[p] <= floor:
            flagged.append((int(i), int(j)))
            D[i, j] = D[j, i] = np.nan
            continue
        d2 = max(-4 * t_probe * math.log((4 * math.pi * t_probe) ** (dim / 2) * H0[p]), 0.0)
        for _ in range(3):  # re-center the window on the improved estimate
            ts = _window(d2, h_mesh, max_ratio, lattice, span, n_times)
            Hp = heat_pairs(ts, np.array([i]), np.array([j]))[:, 0]
            ok = Hp > floor
            if ok.sum() < 2:
                break
            dd = -4 * ts[ok] * np.log((4 * math.pi * ts[ok]) ** (dim / 2) * Hp[ok])
            c0, r = _fit_line(ts[ok], dd)
            d2 = max(c0, 0.0)
        if ok.sum() < 2:
            flagged.append((int(i), int(j)))
            D[i, j] = D[j, i] = np.nan
            continue
        D[i, j] = D[j, i] = math.sqrt(d2)
        err[i, j] = err[j, i] = r / max(2 * D[i, j], 1e-300)
    return DistanceMatrix(labels, D, "ambient", err, tuple(flagged))


def _probe_time(lam, tr, iu, ju, floor) -> float:
    """Smallest time on a coarse log grid where all pairs exceed ``100*floor``."""
    for t in np.geomspace(1e-4, 10.0, 60):
        H = np.exp(-lam * t) @ (tr[:, iu] * tr[:, ju])
        if np.all(H > 100 * floor):
            return float(t)
    return 10.0


def intrinsic_distances(dM: DistanceMatrix, eps: float) -> DistanceMatrix:
    """Chain distances: shortest paths through hops of ambient length <= eps."""
    if dM.kind != "ambient":
        raise GeometryError("intrinsic distances are chained from ambient ones")
    v = np.where(np.isfinite(dM.values), dM.values, np.inf)
    adj = np.where((v <= eps) & (v > 0), v, 0.0)
    graph = sp.csr_matrix(adj)
    n_comp, lab = connected_components(graph, directed=False)
    if n_comp > 1:
        groups = [np.flatnonzero(lab == c).tolist() for c in range(n_comp)]
        raise GeometryError(f"chaining graph is disconnected at eps={eps}: components {groups}")
    out = dijkstra(graph, directed=False)
    return DistanceMatrix(dM.labels, out, "intrinsic")


def nearest_neighbor_scale(dM: DistanceMatrix) -> float:
    v = dM.values + np.diag(np.full(dM.values.shape[0], np.inf))
    return float(np.nanmax(np.nanmin(v, axis=1)))


# ---------------------------------------------------------------------------
# oracles


def _stencil_offsets(r: int) -> list[tuple[int, int]]:
    return [(a, b) for a in range(-r, r + 1) for b in range(-r, r + 1)
            if (a, b) != (0, 0) and math.gcd(abs(a), abs(b)) == 1]


def geodesic_graph(man: DiscreteManifold, reach: int = 5) -> sp.csr_matrix:
    """Graph whose shortest paths approximate geodesics.

    On a cycle this is the mesh itself.  On a torus every vertex is joined to
    lattice offsets up to ``reach`` in each direction (primitive ones only),
    weighted by the metric length of the straight segment, so that paths are
    no longer restricted to the four grid directions.
    """
    if man.geometry_spec["kind"] == "cycle":
        e = man.edges
        w = man.edge_lengths
        g = sp.coo_matrix((np.r_[w, w], (np.r_[e[:, 0], e[:, 1]], np.r_[e[:, 1], e[:, 0]])),
                          shape=(man.vertex_count,) * 2)
        return g.tocsr()
    nx, ny = man.geometry_spec["nx"], man.geometry_spec["ny"]
    hx = man.geometry_spec.get("lx", 1.0) / nx
    hy = man.geometry_spec.get("ly", 1.0) / ny
    c = np.sqrt(man.mass / (hx * hy)).reshape(ny, nx)
    iy, ix = np.meshgrid(np.arange(ny), np.arange(nx), indexing="ij")
    rows, cols, vals = [], [], []
    for a, b in _stencil_offsets(reach):
        # conformal factor averaged along the segment at its sample points
        steps = max(abs(a), abs(b))
        acc = np.zeros((ny, nx))
        for s in range(steps + 1):
            fx = (ix + round(a * s / steps)) % nx
            fy = (iy + round(b * s / steps)) % ny
            wgt = 0.5 if s in (0, steps) else 1.0
            acc += wgt * c[fy, fx]
        cbar = acc / steps
        length = cbar * math.hypot(a * hx, b * hy)
        rows.append((iy * nx + ix).ravel())
        cols.append((((iy + b) % ny) * nx + (ix + a) % nx).ravel())
        vals.append(length.ravel())
    r, cc, v = np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)
    # symmetrize, then keep the shortest of any coinciding (wrapped) offsets
    r, cc, v = np.r_[r, cc], np.r_[cc, r], np.r_[v, v]
    N = man.vertex_count
    key = r.astype(np.int64) * N + cc
    order = np.lexsort((v, key))
    key, v = key[order], v[order]
    first = np.r_[True, key[1:] != key[:-1]]
    keep = first & (key // N != key % N)
    return sp.csr_matrix((v[keep], (key[keep] // N, key[keep] % N)), shape=(N, N))


def geodesic_distances(man: DiscreteManifold, vertices, reach: int = 5) -> np.ndarray:
    vertices = np.asarray(vertices, dtype=int)
    d = dijkstra(geodesic_graph(man, reach), directed=False, indices=vertices)
    return d[:, vertices]


def heat_oracle(man: DiscreteManifold, y: int, t: float) -> np.ndarray:
    """``H(., y; t)`` by exponentiating the heat generator without eigenvectors."""
    from scipy.sparse.linalg import expm_multiply

    minv = sp.diags(1.0 / man.mass)
    A = -(minv @ man.stiffness)
    e = np.zeros(man.vertex_count)
    e[y] = 1.0 / man.mass[y]
    return expm_multiply(A * t, e)
