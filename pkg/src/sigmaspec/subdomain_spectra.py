"""Subdomain Dirichlet spectra from Dirichlet spectral data.

A generalized source is represented by the Fourier coefficients ``kappa`` of
the wave it produces at t = 0.  Requiring that wave to vanish on part of
Sigma is a linear constraint on ``kappa``; minimizing the Rayleigh quotient
``sum lam_j kappa_j^2 / sum kappa_j^2`` under it (Courant-Fischer) gives the
Dirichlet spectrum of the cut manifold.  Comparing cuts along Sigma, Sigma_1
and Sigma_2 separates the five pieces.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .manifold_forge import SpectralDataset

LABELS = ("S1", "S2", "M\\S", "M\\S1", "M\\S2")


class SubspectrumError(ValueError):
    pass


@dataclass(frozen=True)
class ConstrainedSourceSpace:
    subset: str
    slots: np.ndarray
    basis: np.ndarray  # (J, k), H1-orthonormal
    l2_basis: np.ndarray  # (J, k), L2-orthonormal span of the same space

    @property
    def dim(self) -> int:
        return self.basis.shape[1]


@dataclass
class SplitSpectrum:
    subset: str
    t_values: np.ndarray
    kappas: np.ndarray  # (J, n), L2-orthonormal columns
    assignment: list = field(default_factory=list)
    complete: bool = False  # every eigenvalue of the constrained problem returned


def subset_slots(data: SpectralDataset, subset: str) -> np.ndarray:
    if subset in ("Sigma", "all", ""):
        return np.arange(data.sigma_size)
    if subset == "none":
        return np.zeros(0, dtype=int)
    if subset[5:].isdigit() and subset.startswith("Sigma"):
        k = int(subset[5:]) - 1
        if not 0 <= k < len(data.components):
            raise SubspectrumError(f"{subset} does not exist: Sigma has "
                                   f"{len(data.components)} components")
        return data.component_slots(k)
    raise SubspectrumError(f"unknown Sigma subset {subset!r}")


def constrained_sources(data: SpectralDataset, subset: str = "Sigma",
                        tol: float = 1e-10) -> ConstrainedSourceSpace:
    """Coefficient vectors whose wave vanishes on the chosen part of Sigma."""
    slots = subset_slots(data, subset)
    J = data.J
    if slots.size == 0:
        Q = np.eye(J)
    else:
        A = data.traces[:, slots].T  # (|subset|, J)
        _, s, Vt = np.linalg.svd(A, full_matrices=True)
        top = s[0] if s.size else 0.0
        rank = int(np.sum(s > tol * max(top, 1e-300)))
        if rank == 0:
            raise SubspectrumError("trace constraints are trivial on this subset")
        Q = Vt[rank:].T
    G = Q.T @ ((data.lambdas + 1.0)[:, None] * Q)
    w, V = np.linalg.eigh(G)
    basis = Q @ (V / np.sqrt(w)[None, :])
    return ConstrainedSourceSpace(subset, slots, basis, Q)


def maxmin_spectrum(data: SpectralDataset, subset: str = "Sigma",
                    n_max: int | None = None) -> SplitSpectrum:
    """Constrained Rayleigh-quotient eigenvalues ``t_n`` and their minimizers."""
    space = constrained_sources(data, subset)
    Q = space.l2_basis
    k = Q.shape[1]
    n = k if n_max is None else min(n_max, k)
    if n <= 0:
        return SplitSpectrum(subset, np.zeros(0), np.zeros((data.J, 0)), complete=(k == 0))
    A = Q.T @ (data.lambdas[:, None] * Q)
    t, V = np.linalg.eigh(0.5 * (A + A.T))
    kap = Q @ V[:, :n]
    return SplitSpectrum(subset, t[:n].copy(), kap, complete=(n == k))


def _clusters(values: np.ndarray, tau: float) -> list[np.ndarray]:
    """Index groups of values closer than tau (relative to max(1, |value|))."""
    groups = []
    start = 0
    for i in range(1, values.size + 1):
        if i == values.size or values[i] - values[i - 1] > tau * max(1.0, abs(values[i])):
            groups.append(np.arange(start, i))
            start = i
    return groups


@dataclass
class AssignedSpectra:
    runs: dict  # subset -> SplitSpectrum
    values: dict  # label -> ascending eigenvalues (with multiplicity)
    kappas: dict  # label -> (J, m) coefficient vectors
    ambiguous: list  # (value, subset) pairs
    cutoff: float
    ambiguity_fraction: float

    def to_json(self) -> dict:
        return {lab: {"values": self.values[lab].tolist(), "kappas": self.kappas[lab].T.tolist()}
                for lab in LABELS}


def assign_spectra(data: SpectralDataset, n_max: int | None = None,
                   tau: float | None = None, max_ambiguity: float = 0.2,
                   truncated: bool = False) -> AssignedSpectra:
    """Label constrained eigenvalues with the piece of M they belong to.

    ``A = sigma(S1) + sigma(S2) + sigma(M\\S)``, ``B = sigma(S1) + sigma(M\\S1)``,
    ``C = sigma(S2) + sigma(M\\S2)``: values in A and B belong to S1, in A and
    C to S2, only in A to M\\S, only in B to M\\S1, only in C to M\\S2.  Values
    above the smallest top value of an incomplete run are left out, since
    their partner might lie beyond that run.  ``tau`` defaults to 1e-6
    (relative) for complete data and 1e-2 for ``truncated`` data.
    """
    if len(data.components) != 2:
        raise SubspectrumError("assignment needs Sigma = Sigma_1 + Sigma_2")
    if tau is None:
        tau = 1e-2 if truncated else 1e-6
    runs = {s: maxmin_spectrum(data, s, n_max) for s in ("Sigma", "Sigma1", "Sigma2")}
    tops = [r.t_values[-1] for r in runs.values() if not r.complete and r.t_values.size]
    cutoff = min(tops) * (1 + 0.5 * tau) if tops else np.inf
    cl = {s: _clusters(r.t_values, tau) for s, r in runs.items()}
    centers = {s: np.array([runs[s].t_values[g].mean() for g in cl[s]]) for s in runs}

    def center(s, g):
        return float(np.mean(runs[s].t_values[g]))

    def match(v, s):
        hit = np.flatnonzero(np.abs(centers[s] - v) <= tau * max(1.0, abs(v)))
        return cl[s][hit[0]] if hit.size else None

    values = {lab: [] for lab in LABELS}
    kaps = {lab: [] for lab in LABELS}
    ambiguous = []
    total = 0

    def add(lab, s, g):
        values[lab].extend(runs[s].t_values[g].tolist())
        kaps[lab].append(runs[s].kappas[:, g])

    for g in cl["Sigma"]:
        v = center("Sigma", g)
        if v > cutoff:
            continue
        total += 1
        inB, inC = match(v, "Sigma1"), match(v, "Sigma2")
        if inB is not None and inC is not None:
            ambiguous.append((v, "Sigma"))
        elif inB is not None:
            if len(inB) != len(g):
                ambiguous.append((v, "Sigma"))
            else:
                add("S1", "Sigma", g)
        elif inC is not None:
            if len(inC) != len(g):
                ambiguous.append((v, "Sigma"))
            else:
                add("S2", "Sigma", g)
        else:
            add("M\\S", "Sigma", g)
    for s, lab in (("Sigma1", "M\\S1"), ("Sigma2", "M\\S2")):
        other = "Sigma2" if s == "Sigma1" else "Sigma1"
        for g in cl[s]:
            v = center(s, g)
            if v > cutoff or match(v, "Sigma") is not None:
                continue
            total += 1
            if match(v, other) is not None:
                ambiguous.append((v, s))
            else:
                add(lab, s, g)
    frac = len(ambiguous) / max(total, 1)
    out_vals = {lab: np.sort(np.asarray(values[lab])) for lab in LABELS}
    out_kap = {lab: (np.concatenate(kaps[lab], axis=1) if kaps[lab] else np.zeros((data.J, 0)))
               for lab in LABELS}
    result = AssignedSpectra(runs, out_vals, out_kap, ambiguous, float(cutoff), frac)
    if frac > max_ambiguity:
        raise SubspectrumError(
            f"{100 * frac:.0f}% of eigenvalues are ambiguous: disjointness hypothesis likely "
            "violated")
    return result


@dataclass(frozen=True)
class ExtendedEigenfunction:
    label: str
    value: float
    kappa: np.ndarray
    certificate: float  # sup of the extended function off its piece (or on Sigma~)


def extended_eigenfunctions(assigned: AssignedSpectra, data: SpectralDataset, label: str,
                            basis=None, sigma=None) -> list[ExtendedEigenfunction]:
    """Normalized coefficient vectors of the extended eigenfunctions of a piece.

    With the manifold basis and hypersurface (test mode) the certificate is the
    largest value of ``sum_j kappa_j phi_j`` outside the piece; otherwise it is
    the trace residual on the constrained part of Sigma.
    """
    from .manifold_forge import region_vertices

    K = assigned.kappas[label]
    vals = assigned.values[label]
    subset = {"S1": "Sigma", "S2": "Sigma", "M\\S": "Sigma", "M\\S1": "Sigma1",
              "M\\S2": "Sigma2"}[label]
    out = []
    if basis is not None and sigma is not None:
        inside = np.zeros(basis.modes.shape[0], dtype=bool)
        inside[region_vertices(sigma, label)] = True
        comp = ~inside
    for k in range(K.shape[1]):
        kap = K[:, k] / np.linalg.norm(K[:, k])
        if basis is not None and sigma is not None:
            u = basis.modes[:, :kap.size] @ kap
            cert = float(np.abs(u[comp]).max()) if comp.any() else 0.0
        else:
            slots = subset_slots(data, subset)
            cert = float(np.abs(kap @ data.traces[:, slots]).max()) if slots.size else 0.0
        out.append(ExtendedEigenfunction(label, float(vals[k]), kap, cert))
    return out


def oracle_kappas(basis, man, sigma, label: str, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Coefficients of the first n Dirichlet eigenfunctions of a piece, extended by zero."""
    from .manifold_forge import dirichlet_pencil_eigs, region_vertices

    verts = region_vertices(sigma, label)
    vals, vecs = dirichlet_pencil_eigs(man, verts, n, vectors=True)
    U = np.zeros((man.vertex_count, vecs.shape[1]))
    U[verts] = vecs
    return vals, basis.modes.T @ (man.mass[:, None] * U)


def projector_distance(A: np.ndarray, B: np.ndarray) -> float:
    """Spectral-norm distance between orthogonal projectors onto span A and span B."""
    Qa, _ = np.linalg.qr(A)
    Qb, _ = np.linalg.qr(B)
    return float(np.linalg.norm(Qa @ Qa.T - Qb @ Qb.T, 2))
