"""Piecewise-linear sources on Sigma and exact oscillator responses to them."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SourceSignal:
    """Density on Sigma sampled in time, linear between samples, zero outside.

    ``samples[k]`` is the density at ``t_start + k*dt``; the signal vanishes for
    t < t_start and t > t_end.  ``scope`` lists the Sigma slots (positions in
    the dataset's Sigma ordering) that the columns refer to.
    """

    samples: np.ndarray  # (n_t, n_scope)
    dt: float
    t_start: float
    scope: np.ndarray  # slot indices into Sigma

    def __post_init__(self):
        s = np.atleast_2d(np.asarray(self.samples, dtype=float))
        object.__setattr__(self, "samples", s)
        object.__setattr__(self, "scope", np.asarray(self.scope, dtype=int))
        if s.shape[1] != self.scope.size:
            raise ValueError("sample columns must match scope size")
        if self.dt <= 0:
            raise ValueError("dt must be positive")

    @property
    def times(self) -> np.ndarray:
        return self.t_start + self.dt * np.arange(self.samples.shape[0])

    @property
    def t_end(self) -> float:
        return self.t_start + self.dt * (self.samples.shape[0] - 1)

    def full(self, sigma_size: int) -> np.ndarray:
        """Samples expanded to all Sigma slots, (n_t, sigma_size)."""
        out = np.zeros((self.samples.shape[0], sigma_size))
        out[:, self.scope] = self.samples
        return out

    def at(self, t: np.ndarray, sigma_size: int | None = None) -> np.ndarray:
        """Interpolated density at times t, (len(t), n_scope or sigma_size)."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        x = (t - self.t_start) / self.dt
        k = np.clip(np.floor(x).astype(int), 0, self.samples.shape[0] - 2)
        frac = (x - k)[:, None]
        if self.samples.shape[0] == 1:
            vals = np.repeat(self.samples, t.size, axis=0)
        else:
            vals = (1 - frac) * self.samples[k] + frac * self.samples[k + 1]
        vals[(t < self.t_start - 1e-12 * self.dt) | (t > self.t_end + 1e-12 * self.dt)] = 0.0
        if sigma_size is None:
            return vals
        out = np.zeros((t.size, sigma_size))
        out[:, self.scope] = vals
        return out

    def scaled(self, c: float) -> "SourceSignal":
        return SourceSignal(c * self.samples, self.dt, self.t_start, self.scope)

    @classmethod
    def zeros_like(cls, other: "SourceSignal") -> "SourceSignal":
        return cls(np.zeros_like(other.samples), other.dt, other.t_start, other.scope)


def smooth_pulse(sigma_size: int, slots, center: float, width: float, dt: float,
                 amplitudes=None) -> SourceSignal:
    """C^2 compactly supported bump (cos^4 profile) on the chosen slots."""
    slots = np.atleast_1d(np.asarray(slots, dtype=int))
    t0 = center - width
    n = int(round(2 * width / dt)) + 1
    t = t0 + dt * np.arange(n)
    prof = np.cos(0.5 * np.pi * np.clip((t - center) / width, -1, 1)) ** 4
    amp = np.ones(slots.size) if amplitudes is None else np.asarray(amplitudes, dtype=float)
    return SourceSignal(prof[:, None] * amp[None, :], dt, t0, slots)


def band_limited(rng: np.random.Generator, slots, t_start: float, duration: float,
                 dt: float, omega_max: float, n_terms: int = 12,
                 taper: bool = True) -> SourceSignal:
    """Random sum of sinusoids below ``omega_max`` under a smooth window."""
    slots = np.atleast_1d(np.asarray(slots, dtype=int))
    n = int(round(duration / dt)) + 1
    t = dt * np.arange(n)
    out = np.zeros((n, slots.size))
    for c in range(slots.size):
        om = rng.uniform(0.0, omega_max, n_terms)
        ph = rng.uniform(0, 2 * np.pi, n_terms)
        a = rng.normal(size=n_terms)
        out[:, c] = (a[None, :] * np.sin(om[None, :] * t[:, None] + ph[None, :])).sum(axis=1)
    if taper:
        out *= (np.sin(np.pi * t / duration) ** 4)[:, None]
    out /= max(np.abs(out).max(), 1e-300)
    return SourceSignal(out, dt, t_start, slots)


# ---------------------------------------------------------------------------
# oscillator kernels: responses of u'' + w^2 u = y(s), u = u' = 0 initially


def _k1(w, d):
    """sin(w d)/w, regular at w = 0."""
    return d * np.sinc(w * d / np.pi)


def _k2(w, d):
    """(1 - cos(w d))/w^2."""
    return 0.5 * d * d * np.sinc(w * d / (2 * np.pi)) ** 2


def _k3(w, d):
    """(w d - sin(w d))/w^3, series near 0."""
    x = w * d
    small = np.abs(x) < 1e-2
    xs = np.where(small, 0.0, x)
    wsafe = np.where(small, 1.0, w)
    direct = (xs - np.sin(xs)) / np.where(small, 1.0, wsafe ** 3)
    x2 = x * x
    series = d ** 3 * (1 / 6 - x2 / 120 + x2 * x2 / 5040)
    return np.where(small, series, direct)


def modal_response(lambdas: np.ndarray, breaks: np.ndarray, forcing: np.ndarray,
                   t_eval: np.ndarray, t0: float | None = None, t_end: float | None = None,
                   ) -> tuple[np.ndarray, np.ndarray]:
    """Exact response of ``u_j'' + lam_j u_j = y_j(t)`` to piecewise-linear forcing.

    Parameters
    ----------
    lambdas : (J,)
    breaks : (n_b,) ascending knot times of the forcing
    forcing : (n_b, J) forcing values at the knots; zero before ``breaks[0]``
        and after ``breaks[-1]`` (jumps allowed there)
    t_eval : (n_e,) times at which to report u_j and u_j'

    Returns
    -------
    u, du : (n_e, J)
    """
    lam = np.clip(np.asarray(lambdas, dtype=float), 0.0, None)
    w = np.sqrt(lam)
    breaks = np.asarray(breaks, dtype=float)
    forcing = np.asarray(forcing, dtype=float)
    t_eval = np.atleast_1d(np.asarray(t_eval, dtype=float))
    J = lam.size
    order = np.argsort(t_eval, kind="stable")
    te = t_eval[order]
    t_start = breaks[0] if t0 is None else t0
    t_stop = breaks[-1] if t_end is None else t_end
    grid = np.union1d(breaks, te[te > t_start])
    grid = grid[grid >= t_start]
    u = np.zeros(J)
    du = np.zeros(J)
    out_u = np.zeros((te.size, J))
    out_du = np.zeros((te.size, J))
    # values just right of each node and just left of the next
    def left_right(a, b):
        if a >= t_stop or b <= t_start:
            return np.zeros(J), np.zeros(J)
        ya = _interp_rows(breaks, forcing, a)
        yb = _interp_rows(breaks, forcing, b)
        return ya, yb

    ie = 0
    while ie < te.size and te[ie] <= t_start:
        ie += 1
    for a, b in zip(grid[:-1], grid[1:]):
        d = b - a
        ya, yb = left_right(a, b)
        m = (yb - ya) / d
        c, s1 = np.cos(w * d), _k1(w, d)
        k2, k3 = _k2(w, d), _k3(w, d)
        u, du = (u * c + du * s1 + ya * k2 + m * k3,
                 -u * lam * s1 + du * c + ya * s1 + m * k2)
        while ie < te.size and te[ie] <= b + 1e-13 * max(1.0, abs(b)):
            out_u[ie], out_du[ie] = u, du
            ie += 1
    while ie < te.size:
        out_u[ie], out_du[ie] = u, du
        ie += 1
    inv = np.empty_like(order)
    inv[order] = np.arange(order.size)
    return out_u[inv], out_du[inv]


def _interp_rows(x: np.ndarray, Y: np.ndarray, t: float) -> np.ndarray:
    if x.size == 1:
        return Y[0].copy()
    k = int(np.clip(np.searchsorted(x, t, side="right") - 1, 0, x.size - 2))
    f = (t - x[k]) / (x[k + 1] - x[k])
    return (1 - f) * Y[k] + f * Y[k + 1]
