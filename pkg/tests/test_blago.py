import numpy as np
import pytest

from sigmaspec import blago
from sigmaspec import transmission_oracle as to
from sigmaspec.manifold_forge import build_manifold, carve_hypersurface, eigendecompose, emit_spectral_data
from sigmaspec.signals import SourceSignal, band_limited, modal_response, smooth_pulse


def test_single_mode_response_matches_closed_form():
    # u'' + w^2 u = 1 from rest: u = (1 - cos w t) / w^2
    lam = np.array([4.0])
    breaks = np.linspace(0.0, 3.0, 31)
    forcing = np.ones((breaks.size, 1))
    t = np.array([0.5, 1.7, 2.9])
    u, du = modal_response(lam, breaks, forcing, t)
    assert np.allclose(u[:, 0], (1 - np.cos(2 * t)) / 4, atol=1e-13)
    assert np.allclose(du[:, 0], np.sin(2 * t) / 2, atol=1e-13)


def test_zero_mode_response_is_double_integral():
    lam = np.array([0.0])
    breaks = np.linspace(0.0, 1.0, 11)
    forcing = breaks[:, None].copy()
    u, du = modal_response(lam, breaks, forcing, np.array([1.0]))
    assert np.isclose(u[0, 0], 1 / 6) and np.isclose(du[0, 0], 1 / 2)


def test_coefficients_match_time_oracle(cycle128):
    man, sig, basis, data = cycle128
    dt = 1e-3
    h = smooth_pulse(sig.size, [0, 1], 0.4, 0.3, dt, amplitudes=[1.0, -0.5])
    c = blago.blago_coefficients(data, h, 1.5, "h")
    fld = to.solve_transmission_time(man, sig, None, h, 1.5, dt, t0=0.0)
    ref = basis.modes.T @ (man.mass * fld.frames[-1])
    assert np.linalg.norm(c.values[0] - ref) / np.linalg.norm(ref) < 1e-4


def test_coefficients_are_linear(cycle128, rng):
    data = cycle128[3]
    a = band_limited(rng, [0], 0.0, 0.5, 0.01, 20.0)
    b = SourceSignal(rng.normal(size=a.samples.shape), 0.01, 0.0, [0])
    ab = SourceSignal(2 * a.samples - 3 * b.samples, 0.01, 0.0, [0])
    ca, cb, cab = (blago.blago_coefficients(data, s, 0.8).values for s in (a, b, ab))
    assert np.allclose(cab, 2 * ca - 3 * cb, rtol=1e-12, atol=1e-14)


def test_zero_source_gives_zero_wave(cycle128):
    data = cycle128[3]
    z = SourceSignal(np.zeros((5, 2)), 0.1, 0.0, [0, 1])
    assert not np.any(blago.blago_coefficients(data, z, [0.2, 1.0]).values)


def test_coefficients_vanish_before_source(cycle128):
    data = cycle128[3]
    h = smooth_pulse(data.sigma_size, [0], 1.0, 0.2, 0.01)
    assert not np.any(blago.blago_coefficients(data, h, 0.7).values)


def test_sigma_trace_is_coefficients_times_traces(cycle128):
    data = cycle128[3]
    h = smooth_pulse(data.sigma_size, [1], 0.3, 0.2, 0.01)
    t = np.array([0.4, 0.9])
    tr = blago.sigma_trace(data, h, t)
    assert np.allclose(tr, blago.blago_coefficients(data, h, t).values @ data.traces)


def test_batched_wave_maps_match_single(cycle128, rng):
    data = cycle128[3]
    srcs = [band_limited(rng, [k % 2], -1.0, 1.0, 0.01, 15.0) for k in range(4)]
    srcs.append(smooth_pulse(data.sigma_size, [0, 1], -0.5, 0.2, 0.02))
    K = blago.wave_maps(data, srcs)
    for k, s in enumerate(srcs):
        assert np.allclose(K[:, k], blago.wave_map(data, s)[0], rtol=1e-12, atol=1e-15)


def test_wave_map_needs_source_before_zero(cycle128):
    h = smooth_pulse(2, [0], 0.5, 0.2, 0.01)
    with pytest.raises(blago.BlagoError):
        blago.wave_map(cycle128[3], h)


def test_duplicated_sources_leave_rank_unchanged(rng):
    man = build_manifold({"kind": "cycle", "n": 24})
    sig = carve_hypersurface(man, [[0], [9]], [4])
    data = emit_spectral_data(eigendecompose(man), sig, "dirichlet", man)
    srcs = [band_limited(rng, [k % 2], -8.0, 8.0, 0.02, 20.0) for k in range(40)]
    r1 = blago.controllability_gram(data, srcs).rank
    r2 = blago.controllability_gram(data, srcs + srcs[:10]).rank
    assert r1 == r2


def test_quasinorm_weights_modes(cycle128):
    data = cycle128[3]
    kappa = np.zeros(data.J)
    kappa[3] = 2.0
    assert np.isclose(blago.quasinorm(data, kappa), 4.0 * (data.lambdas[3] + 1))
