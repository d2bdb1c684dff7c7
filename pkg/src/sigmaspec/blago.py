"""Wave Fourier coefficients and traces computed from spectral data alone.

The coefficient of mode j obeys ``u_j'' + lam_j u_j = h_j(t)`` with
``h_j(s) = <h(., s), phi_j>_w`` for an h-jump source, and ``-<f(., s),
d_nu phi_j>_w`` for an f-jump source.  Sources are linear between samples, so
the Duhamel integrals are evaluated exactly per segment.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .manifold_forge import SpectralDataset
from .signals import SourceSignal, modal_response


class BlagoError(ValueError):
    pass


@dataclass(frozen=True)
class WaveCoefficients:
    """Per-mode values ``u_j(t)`` (rows follow ``times``) and derivatives."""

    values: np.ndarray  # (n_t, J)
    rates: np.ndarray  # (n_t, J)
    times: np.ndarray
    dataset_id: str

    @property
    def kappa(self) -> np.ndarray:
        if self.times.size != 1:
            raise BlagoError("kappa is defined for a single time")
        return self.values[0]

    def to_json(self) -> dict:
        return {"dataset_id": self.dataset_id, "times": self.times.tolist(),
                "values": self.values.tolist(), "rates": self.rates.tolist()}


def modal_forcing(data: SpectralDataset, signal: SourceSignal, kind: str = "h") -> np.ndarray:
    """Knot values of the modal forcing, shape (n_samples, J)."""
    dens = signal.full(data.sigma_size) * data.weights[None, :]
    if kind in ("h", "h-jump"):
        return dens @ data.traces.T
    if kind in ("f", "f-jump"):
        if data.kind != "cauchy" or data.normal_traces is None:
            raise BlagoError("f-jump coefficients need Cauchy data (normal traces)")
        return -dens @ data.normal_traces.T
    raise BlagoError(f"unknown source kind {kind!r}")


def blago_coefficients(data: SpectralDataset, signal: SourceSignal, t,
                       kind: str = "h") -> WaveCoefficients:
    """Fourier coefficients of the wave generated by ``signal`` at times ``t``."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    forcing = modal_forcing(data, signal, kind)
    u, du = modal_response(data.lambdas, signal.times, forcing, t)
    return WaveCoefficients(u, du, t, data.manifold_id)


def combined_coefficients(data: SpectralDataset, f: SourceSignal | None,
                          h: SourceSignal | None, t) -> WaveCoefficients:
    parts = [blago_coefficients(data, s, t, k) for s, k in ((f, "f"), (h, "h")) if s is not None]
    if not parts:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        z = np.zeros((t.size, data.J))
        return WaveCoefficients(z, z.copy(), t, data.manifold_id)
    vals = sum(p.values for p in parts)
    rates = sum(p.rates for p in parts)
    return WaveCoefficients(vals, rates, parts[0].times, data.manifold_id)


def sigma_trace(data: SpectralDataset, h: SourceSignal, t_grid) -> np.ndarray:
    """Trace of the h-jump wave on Sigma, shape (len(t_grid), |Sigma|)."""
    c = blago_coefficients(data, h, t_grid, "h")
    return c.values @ data.traces


def wave_map(data: SpectralDataset, h: SourceSignal) -> tuple[np.ndarray, float]:
    """``kappa = u^{0,h}(0)`` and the H1 quasinorm ``sum (lam_j + 1) kappa_j^2``."""
    if h.t_start >= 0:
        raise BlagoError("wave map needs a source that starts before t = 0")
    kappa = blago_coefficients(data, h, 0.0, "h").kappa
    return kappa, quasinorm(data, kappa)


def wave_maps(data: SpectralDataset, sources: list[SourceSignal]) -> np.ndarray:
    """``kappa`` for many sources, shape (J, n_src); sources on one time grid share a solve."""
    groups: dict = {}
    for i, src in enumerate(sources):
        if src.t_start >= 0:
            raise BlagoError("wave map needs a source that starts before t = 0")
        key = (src.dt, src.t_start, src.samples.shape[0])
        groups.setdefault(key, []).append(i)
    out = np.zeros((data.J, len(sources)))
    for idx in groups.values():
        forcing = np.concatenate([modal_forcing(data, sources[i]) for i in idx], axis=1)
        lam = np.tile(data.lambdas, len(idx))
        u, _ = modal_response(lam, sources[idx[0]].times, forcing, np.array([0.0]))
        out[:, idx] = u[0].reshape(len(idx), data.J).T
    return out


def quasinorm(data: SpectralDataset, kappa: np.ndarray) -> float:
    return float(np.sum((data.lambdas + 1.0) * np.abs(kappa) ** 2))


@dataclass(frozen=True)
class GramReport:
    gram: np.ndarray
    rank: int
    singular_values: np.ndarray
    probe_residuals: np.ndarray

    @property
    def worst_residual(self) -> float:
        return float(self.probe_residuals.max()) if self.probe_residuals.size else 0.0


def controllability_gram(data: SpectralDataset, sources: list[SourceSignal], mode: str = "H1",
                         n_probes: int = 16, seed: int = 0, rtol: float = 1e-8) -> GramReport:
    """Gram matrix of the wave-map images of ``sources`` and its numerical rank.

    Probe targets are random coefficient vectors normalized in the chosen
    norm; their residual is the distance to the span of the images.
    """
    if not sources:
        raise BlagoError("need at least one source")
    weight = np.ones(data.J) if mode.upper() == "L2" else data.lambdas + 1.0
    K = wave_maps(data, sources)  # (J, n_src)
    A = np.sqrt(weight)[:, None] * K
    G = A.T @ A
    U, s, _ = np.linalg.svd(A, full_matrices=False)
    rank = int(np.sum(s > rtol * s[0])) if s.size and s[0] > 0 else 0
    Q = U[:, :rank]
    rng = np.random.default_rng(seed)
    probes = rng.normal(size=(data.J, n_probes))
    probes /= np.linalg.norm(probes, axis=0)
    res = np.linalg.norm(probes - Q @ (Q.T @ probes), axis=0)
    return GramReport(G, rank, s, res)
