"""Discrete closed manifolds, interior hypersurfaces and spectral datasets.

A manifold is a structured grid (a cycle in 1D, a periodic grid in 2D) carrying
a stiffness form K and a diagonal mass form M such that the pencil
``K phi = lambda M phi`` discretizes the Laplace-Beltrami operator.

A hypersurface is a vertex set. Every Sigma vertex has its dual cell split in
two halves, one per side, and every edge is assigned to the side it touches
(edges inside Sigma are split half/half).  This gives the exact splitting

    K = K_minus + K_plus,    M = M_minus + M_plus

from which one-sided normal fluxes are defined:

    d_nu u_plus  =  [(K_plus  - lam M_plus ) u](x) / w_x
    d_nu u_minus = -[(K_minus - lam M_minus) u](x) / w_x

with the normal nu pointing toward M_minus (the S side).  The jump of these two
quantities is ``[(K - lam M) u](x) / w_x`` which makes the distributional
transmission problem and the duplicated-node problem coincide exactly.
"""
from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)

MIN_CYCLE = 8
MIN_TORUS = 8
REGION_NAMES = ("S1", "S2", "M\\S", "M\\S1", "M\\S2")


class ManifoldError(ValueError):
    """Invalid geometry, hypersurface or dataset request."""


class EigenSolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class DiscreteManifold:
    id: str
    dim: int
    vertex_count: int
    geometry_spec: dict
    stiffness: sp.csr_matrix
    mass: np.ndarray
    vertex_coords: np.ndarray
    edges: np.ndarray  # (E, 2) vertex pairs
    edge_weights: np.ndarray  # stiffness coupling per edge
    edge_lengths: np.ndarray  # metric length per edge

    @property
    def volume(self) -> float:
        return float(self.mass.sum())

    def neighbors(self) -> list[list[int]]:
        nb: list[list[int]] = [[] for _ in range(self.vertex_count)]
        for a, b in self.edges:
            nb[a].append(int(b))
            nb[b].append(int(a))
        return nb

    def dense_stiffness(self) -> np.ndarray:
        return self.stiffness.toarray()


@dataclass(frozen=True)
class EigenBasis:
    manifold_id: str
    lambdas: np.ndarray
    modes: np.ndarray  # (N, J), columns mass-orthonormal

    @property
    def J(self) -> int:
        return self.lambdas.size


@dataclass(frozen=True)
class Hypersurface:
    manifold_id: str
    components: tuple[tuple[int, ...], ...]
    vertices: np.ndarray  # all Sigma vertices, component order
    component_of: np.ndarray  # per Sigma vertex, component index
    labels: np.ndarray  # per manifold vertex: -1 Sigma, 0 M\S, k>=1 region S_k
    surface_weights: np.ndarray
    K_minus: sp.csr_matrix
    K_plus: sp.csr_matrix
    mass_minus: np.ndarray
    mass_plus: np.ndarray

    @property
    def size(self) -> int:
        return self.vertices.size

    @property
    def side(self) -> np.ndarray:
        """-1 on M_minus (S), +1 on M_plus, 0 on Sigma."""
        s = np.where(self.labels > 0, -1, 1)
        s[self.labels < 0] = 0
        return s

    def component_vertices(self, k: int) -> np.ndarray:
        return np.asarray(self.components[k], dtype=int)

    def component_slots(self, k: int) -> np.ndarray:
        """Positions of component ``k`` inside ``self.vertices``."""
        return np.flatnonzero(self.component_of == k)

    def flux_plus(self, lam: complex = 0.0) -> sp.csr_matrix:
        """Rows of ``(K_plus - lam M_plus)/w`` at Sigma: one-sided derivative from M_plus."""
        A = (self.K_plus - lam * sp.diags(self.mass_plus)).tocsr()[self.vertices]
        return sp.diags(1.0 / self.surface_weights) @ A

    def flux_minus(self, lam: complex = 0.0) -> sp.csr_matrix:
        A = (self.K_minus - lam * sp.diags(self.mass_minus)).tocsr()[self.vertices]
        return -(sp.diags(1.0 / self.surface_weights) @ A)

    def centered_flux(self) -> sp.csr_matrix:
        """Average of the two one-sided fluxes; independent of lam at Sigma rows."""
        A = 0.5 * (self.K_plus - self.K_minus).tocsr()[self.vertices]
        return sp.diags(1.0 / self.surface_weights) @ A

    def plain_stencils(self) -> tuple[sp.csr_matrix, sp.csr_matrix]:
        """One-sided difference stencils without the half-cell inertia term."""
        return self.flux_plus(0.0), self.flux_minus(0.0)


@dataclass(frozen=True)
class SpectralDataset:
    kind: str  # "cauchy" | "dirichlet"
    manifold_id: str
    components: tuple[tuple[int, ...], ...]
    weights: np.ndarray
    coords: np.ndarray
    lambdas: np.ndarray
    traces: np.ndarray  # (J, |Sigma|)
    normal_traces: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("cauchy", "dirichlet"):
            raise ManifoldError(f"unknown dataset kind {self.kind!r}")
        if (self.kind == "cauchy") != (self.normal_traces is not None):
            raise ManifoldError("cauchy datasets carry normal traces, dirichlet ones do not")
        if self.traces.shape[0] != self.lambdas.size:
            raise ManifoldError("trace rows must match eigenvalue count")
        if np.any(np.diff(self.lambdas) < -1e-12 * max(1.0, abs(self.lambdas[-1]))):
            raise ManifoldError("eigenvalues must be ascending")

    @property
    def J(self) -> int:
        return self.lambdas.size

    @property
    def sigma_size(self) -> int:
        return self.traces.shape[1]

    def component_slots(self, k: int) -> np.ndarray:
        sizes = [len(c) for c in self.components]
        start = sum(sizes[:k])
        return np.arange(start, start + sizes[k])

    def truncated(self, J: int, whole_clusters: bool = True,
                  rtol: float = 1e-8) -> "SpectralDataset":
        """First J modes; extended to the end of a degenerate cluster so that
        no eigenspace is cut (a partial eigenspace is basis dependent)."""
        J = min(J, self.J)
        if whole_clusters:
            scale = max(1.0, abs(float(self.lambdas[-1])))
            while J < self.J and abs(self.lambdas[J] - self.lambdas[J - 1]) <= rtol * scale:
                J += 1
        nt = None if self.normal_traces is None else self.normal_traces[:J].copy()
        return SpectralDataset(self.kind, self.manifold_id, self.components, self.weights,
                               self.coords, self.lambdas[:J].copy(), self.traces[:J].copy(), nt)

    def as_dirichlet(self) -> "SpectralDataset":
        return SpectralDataset("dirichlet", self.manifold_id, self.components, self.weights,
                               self.coords, self.lambdas, self.traces, None)


# ---------------------------------------------------------------------------
# construction


def _manifold_id(spec: dict) -> str:
    parts = [spec["kind"]]
    for key in sorted(k for k in spec if k not in ("kind", "metric", "conformal")):
        parts.append(f"{key}={spec[key]}")
    prof = spec.get("metric", spec.get("conformal"))
    if prof is not None:
        arr = np.asarray(prof, dtype=float)
        if np.allclose(arr, arr.flat[0]):
            parts.append(f"g={arr.flat[0]:.6g}")
        else:
            parts.append("g=" + _digest(arr))
    return ":".join(parts)


def _digest(arr: np.ndarray) -> str:
    import hashlib

    return hashlib.sha256(np.ascontiguousarray(arr.round(14)).tobytes()).hexdigest()[:12]


def build_manifold(spec: dict) -> DiscreteManifold:
    """Assemble stiffness and mass forms for a cycle or a flat-grid torus.

    Parameters
    ----------
    spec : dict
        ``{"kind": "cycle", "n": int, "length": float, "metric": array|None}``
        or ``{"kind": "torus", "nx": int, "ny": int, "lx": float, "ly": float,
        "conformal": array (ny, nx) | None}``.  Metric samples are the length
        density a(s) (cycle) or the conformal factor c(x, y) (torus, metric
        c^2 (dx^2 + dy^2)).
    """
    kind = spec.get("kind")
    if kind == "cycle":
        return _build_cycle(spec)
    if kind == "torus":
        return _build_torus(spec)
    raise ManifoldError(f"unsupported geometry {kind!r}")


def _build_cycle(spec: dict) -> DiscreteManifold:
    n = int(spec["n"])
    if n < MIN_CYCLE:
        raise ManifoldError(f"cycle needs n >= {MIN_CYCLE}, got {n}")
    length = float(spec.get("length", 2 * math.pi))
    a = spec.get("metric")
    a = np.ones(n) if a is None else np.asarray(a, dtype=float)
    if a.shape != (n,):
        raise ManifoldError("metric profile must have one sample per vertex")
    if np.any(~np.isfinite(a)) or np.any(a <= 0):
        raise ManifoldError("metric profile must be strictly positive")
    h = length / n
    i = np.arange(n)
    j = (i + 1) % n
    a_mid = 0.5 * (a[i] + a[j])
    weights = 1.0 / (a_mid * h)
    lengths = a_mid * h
    mass = a * h
    K = _assemble(n, i, j, weights)
    full = dict(spec, kind="cycle", n=n, length=length, metric=a.tolist())
    return DiscreteManifold(_manifold_id(dict(kind="cycle", n=n, length=length, metric=a)),
                            1, n, full, K, mass, (i * h)[:, None],
                            np.stack([i, j], axis=1), weights, lengths)


def _build_torus(spec: dict) -> DiscreteManifold:
    nx, ny = int(spec["nx"]), int(spec["ny"])
    if min(nx, ny) < MIN_TORUS:
        raise ManifoldError(f"torus needs nx, ny >= {MIN_TORUS}")
    lx, ly = float(spec.get("lx", 1.0)), float(spec.get("ly", 1.0))
    c = spec.get("conformal")
    c = np.ones((ny, nx)) if c is None else np.asarray(c, dtype=float)
    if c.shape != (ny, nx):
        raise ManifoldError("conformal factor must be sampled on the (ny, nx) grid")
    if np.any(~np.isfinite(c)) or np.any(c <= 0):
        raise ManifoldError("conformal factor must be strictly positive")
    hx, hy = lx / nx, ly / ny
    n = nx * ny
    idx = np.arange(n).reshape(ny, nx)
    cf = c.ravel()
    right = np.roll(idx, -1, axis=1).ravel()
    up = np.roll(idx, -1, axis=0).ravel()
    base = idx.ravel()
    ei = np.concatenate([base, base])
    ej = np.concatenate([right, up])
    # 2D Dirichlet energy is conformally invariant: weights do not see c
    weights = np.concatenate([np.full(n, hy / hx), np.full(n, hx / hy)])
    lengths = np.concatenate([0.5 * (cf[base] + cf[right]) * hx,
                              0.5 * (cf[base] + cf[up]) * hy])
    mass = cf ** 2 * hx * hy
    K = _assemble(n, ei, ej, weights)
    yy, xx = np.divmod(np.arange(n), nx)
    coords = np.stack([xx * hx, yy * hy], axis=1)
    full = dict(spec, kind="torus", nx=nx, ny=ny, lx=lx, ly=ly, conformal=c.tolist())
    return DiscreteManifold(_manifold_id(dict(kind="torus", nx=nx, ny=ny, lx=lx, ly=ly,
                                              conformal=c)),
                            2, n, full, K, mass, coords, np.stack([ei, ej], axis=1),
                            weights, lengths)


def _assemble(n, i, j, w) -> sp.csr_matrix:
    rows = np.concatenate([i, j, i, j])
    cols = np.concatenate([j, i, i, j])
    vals = np.concatenate([-w, -w, w, w])
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def torus_index(man: DiscreteManifold, ix: int, iy: int) -> int:
    nx, ny = man.geometry_spec["nx"], man.geometry_spec["ny"]
    return (iy % ny) * nx + (ix % nx)


# ---------------------------------------------------------------------------
# eigenbasis

DENSE_LIMIT = 6000


def eigendecompose(man: DiscreteManifold, J: int | None = None) -> EigenBasis:
    """Lowest ``J`` eigenpairs of the stiffness/mass pencil, mass-orthonormal."""
    N = man.vertex_count
    J = N if J is None else int(J)
    if not 1 <= J <= N:
        raise ManifoldError(f"need 1 <= J <= {N}, got {J}")
    K = man.stiffness
    Mh = np.sqrt(man.mass)
    if N <= DENSE_LIMIT:
        # symmetric form D^-1/2 K D^-1/2 keeps eigh on the standard problem
        A = (K.toarray() / Mh[:, None]) / Mh[None, :]
        if J == N:
            lam, V = scipy.linalg.eigh(A, driver="evd")
        else:
            lam, V = scipy.linalg.eigh(A, subset_by_index=[0, J - 1], driver="evr")
    else:
        A = sp.diags(1 / Mh) @ K @ sp.diags(1 / Mh)
        lam, V = spla.eigsh(A, k=J, sigma=-1e-3, which="LM")
        order = np.argsort(lam)
        lam, V = lam[order], V[:, order]
    modes = V / Mh[:, None]
    # the kernel is exactly the constants on a connected closed grid
    lam = lam.copy()
    lam[0] = 0.0
    modes[:, 0] = 1.0 / math.sqrt(man.volume)
    lam = np.maximum(lam, 0.0)
    res = K @ modes - (man.mass[:, None] * modes) * lam[None, :]
    scale = np.maximum(np.abs(lam), 1.0) * np.abs(man.mass[:, None] * modes).max(axis=0)
    rel = np.abs(res).max(axis=0) / scale
    if np.any(rel > 1e-8):
        raise EigenSolverError(f"eigen-residuals too large: max {rel.max():.3e} "
                               f"at modes {np.flatnonzero(rel > 1e-8)[:10].tolist()}")
    return EigenBasis(man.id, lam, modes)


# ---------------------------------------------------------------------------
# hypersurfaces


def carve_hypersurface(man: DiscreteManifold, components: Sequence[Sequence[int]],
                       inside: Sequence[int]) -> Hypersurface:
    """Build Sigma from vertex sets and label the regions it cuts out.

    Parameters
    ----------
    components : list of vertex lists
        Sigma_1, Sigma_2, ...; pairwise disjoint with disjoint neighborhoods.
    inside : list of seed vertices
        One seed per connected piece of S; flood fill from the seed avoiding
        Sigma labels the piece S_k (k = 1, 2, ...).  Everything left is M\\S.
    """
    N = man.vertex_count
    comps = tuple(tuple(int(v) for v in c) for c in components)
    if not comps or any(len(c) == 0 for c in comps):
        raise ManifoldError("empty hypersurface component")
    flat = [v for c in comps for v in c]
    if len(set(flat)) != len(flat):
        raise ManifoldError("hypersurface components overlap")
    if any(not 0 <= v < N for v in flat):
        raise ManifoldError("hypersurface vertex out of range")
    nb = man.neighbors()
    if len(comps) > 1:
        halo = [set(c) | {u for v in c for u in nb[v]} for c in comps]
        for a in range(len(comps)):
            for b in range(a + 1, len(comps)):
                if halo[a] & set(comps[b]) or halo[b] & set(comps[a]):
                    raise ManifoldError("hypersurface components are not separated")
    labels = np.zeros(N, dtype=int)
    labels[flat] = -1
    for k, seed in enumerate(inside, start=1):
        if labels[seed] == -1:
            raise ManifoldError("seed vertex lies on Sigma")
        if labels[seed] > 0:
            raise ManifoldError("two seeds fall in the same region")
        queue = deque([seed])
        labels[seed] = k
        while queue:
            v = queue.popleft()
            for u in nb[v]:
                if labels[u] == 0:
                    labels[u] = k
                    queue.append(u)
    if not np.any(labels == 0):
        raise ManifoldError("vertex set does not separate the manifold")
    # every Sigma vertex must see both sides
    for v in flat:
        sides = {np.sign(labels[u]) for u in nb[v] if labels[u] >= 0}
        if sides != {0, 1}:
            raise ManifoldError(f"Sigma vertex {v} is not two-sided")

    side = np.where(labels > 0, -1, 1)
    side[labels < 0] = 0
    ea, eb = man.edges[:, 0], man.edges[:, 1]
    sa, sb = side[ea], side[eb]
    minus_frac = np.where((sa == -1) | (sb == -1), 1.0, np.where((sa == 0) & (sb == 0), 0.5, 0.0))
    K_minus = _assemble(N, ea, eb, man.edge_weights * minus_frac)
    K_plus = _assemble(N, ea, eb, man.edge_weights * (1.0 - minus_frac))
    on = side == 0
    mass_minus = np.where(side == -1, man.mass, 0.0) + np.where(on, 0.5 * man.mass, 0.0)
    mass_plus = man.mass - mass_minus

    verts = np.asarray(flat, dtype=int)
    comp_of = np.concatenate([np.full(len(c), k) for k, c in enumerate(comps)])
    in_sigma = np.zeros(N, dtype=bool)
    in_sigma[verts] = True
    w = np.zeros(N)
    deg = np.zeros(N, dtype=int)
    both = in_sigma[ea] & in_sigma[eb]
    for ends in (ea[both], eb[both]):
        np.add.at(w, ends, 0.5 * man.edge_lengths[both])
        np.add.at(deg, ends, 1)
    weights = w[verts]
    # segment ends (one Sigma edge) get the full edge length; isolated points
    # (1D) carry counting measure
    weights = np.where(deg[verts] == 1, 2 * weights, weights)
    weights = np.where(deg[verts] == 0, 1.0, weights)
    return Hypersurface(man.id, comps, verts, comp_of, labels, weights,
                        K_minus, K_plus, mass_minus, mass_plus)


def grid_circle(man: DiscreteManifold, axis: str, index: int) -> list[int]:
    """Vertices of a coordinate circle of a torus grid (row for axis='x')."""
    nx, ny = man.geometry_spec["nx"], man.geometry_spec["ny"]
    if axis == "x":
        return [torus_index(man, i, index) for i in range(nx)]
    return [torus_index(man, index, j) for j in range(ny)]


def square_ring(man: DiscreteManifold, cx: int, cy: int, r: int) -> list[int]:
    """Chebyshev ring of radius ``r`` around (cx, cy), corners removed.

    Corners touch only the ring and the outside, so the ring stays a 4-connected
    separator without them and every remaining vertex is two-sided.
    """
    out = []
    for dy in range(-r, r + 1):
        for dx in range(-r, r + 1):
            if max(abs(dx), abs(dy)) == r and abs(dx) != abs(dy):
                out.append(torus_index(man, cx + dx, cy + dy))
    return out


# ---------------------------------------------------------------------------
# datasets


def emit_spectral_data(basis: EigenBasis, sigma: Hypersurface, kind: str = "dirichlet",
                       man: DiscreteManifold | None = None) -> SpectralDataset:
    """Restrict an eigenbasis to Sigma.

    Normal traces (cauchy kind) use the centred flux.  For an eigenfunction
    it equals either one-sided flux at lam_j, but it involves no lam_j m
    term and so loses no digits to cancellation at high modes.
    """
    if basis.manifold_id != sigma.manifold_id:
        raise ManifoldError("basis and hypersurface come from different manifolds")
    kind = kind.lower()
    traces = basis.modes[sigma.vertices].T.copy()
    normal = None
    if kind == "cauchy":
        normal = np.asarray(sigma.centered_flux() @ basis.modes).T
    coords = (man.vertex_coords[sigma.vertices] if man is not None
              else np.zeros((sigma.size, 1)))
    return SpectralDataset(kind, basis.manifold_id, sigma.components,
                           sigma.surface_weights.copy(), coords, basis.lambdas.copy(),
                           traces, normal)


# ---------------------------------------------------------------------------
# subdomain oracles


def region_vertices(sigma: Hypersurface, region: str) -> np.ndarray:
    """Vertex set of S1, S2, M\\S, M\\S1, M\\S2 (or S for all S pieces)."""
    lab = sigma.labels
    if region == "S1":
        return np.flatnonzero(lab == 1)
    if region == "S2":
        return np.flatnonzero(lab == 2)
    if region == "S":
        return np.flatnonzero(lab > 0)
    if region == "M\\S":
        return np.flatnonzero(lab == 0)
    if region in ("M\\S1", "M\\S2"):
        k = int(region[-1])
        drop = set(sigma.components[k - 1]) | set(np.flatnonzero(lab == k).tolist())
        return np.array([v for v in range(lab.size) if v not in drop], dtype=int)
    raise ManifoldError(f"unknown region {region!r}")


def dirichlet_pencil_eigs(man: DiscreteManifold, verts: np.ndarray, n: int | None = None,
                          vectors: bool = False):
    K = man.stiffness.tocsr()[verts][:, verts].toarray()
    m = man.mass[verts]
    sq = np.sqrt(m)
    A = K / sq[:, None] / sq[None, :]
    k = verts.size if n is None else min(n, verts.size)
    lam, V = scipy.linalg.eigh(A, subset_by_index=[0, k - 1])
    if vectors:
        return lam, V / sq[:, None]
    return lam


def subdomain_dirichlet_spectrum(man: DiscreteManifold, sigma: Hypersurface, region: str,
                                 n: int) -> np.ndarray:
    """Ground-truth Dirichlet eigenvalues of a region (functions vanish on bounding Sigma)."""
    verts = region_vertices(sigma, region)
    if verts.size == 0:
        raise ManifoldError(f"region {region} is empty")
    if n > verts.size:
        log.warning("region %s has only %d vertices; truncating n=%d", region, verts.size, n)
    return dirichlet_pencil_eigs(man, verts, n)


@dataclass
class DisjointnessReport:
    spectra: dict[str, np.ndarray]
    min_pairwise_gap: float
    tau: float
    closest: tuple[str, str] | None = None
    passes: bool = field(init=False)

    def __post_init__(self):
        self.passes = bool(self.min_pairwise_gap > 2 * self.tau)


def check_disjointness(man: DiscreteManifold, sigma: Hypersurface, n: int,
                       tau: float) -> DisjointnessReport:
    if len(sigma.components) != 2:
        raise ManifoldError("disjointness check needs Sigma = Sigma_1 u Sigma_2")
    spectra = {r: subdomain_dirichlet_spectrum(man, sigma, r, n) for r in REGION_NAMES}
    gap, pair = math.inf, None
    names = list(spectra)
    for a in range(len(names)):
        for b in range(a + 1, len(names)):
            d = np.abs(spectra[names[a]][:, None] - spectra[names[b]][None, :]).min()
            if d < gap:
                gap, pair = float(d), (names[a], names[b])
    return DisjointnessReport(spectra, gap, float(tau), pair)
