import numpy as np
import pytest

from sigmaspec import green_pipeline as gp
from sigmaspec.manifold_forge import (build_manifold, carve_hypersurface, eigendecompose,
                                      emit_spectral_data)


@pytest.fixture(scope="module")
def small_cycle():
    man = build_manifold({"kind": "cycle", "n": 48})
    sig = carve_hypersurface(man, [[0, 13], [27, 38]], [6, 30])
    data = emit_spectral_data(eigendecompose(man), sig, "dirichlet", man)
    return man, sig, data


def test_single_mode_record_gives_its_pole():
    phi = np.array([0.6, -0.8])
    rec = gp.synthetic_record([9.0], [np.outer(phi, phi)], 0.05, 60.0)
    poles = gp.poles_and_residues(rec)
    assert poles.lambdas.size == 1
    assert abs(poles.lambdas[0] - 9.0) < 1e-9
    assert np.allclose(poles.spectral_gram(0), np.outer(phi, phi), atol=1e-9)
    assert poles.ranks[0] == 1


def test_zero_mode_is_the_linear_part():
    c = np.full((2, 2), 0.25)
    rec = gp.synthetic_record([0.0, 4.0], [c, np.eye(2)], 0.05, 60.0)
    poles = gp.poles_and_residues(rec)
    assert poles.lambdas[0] == 0.0
    assert np.allclose(poles.spectral_gram(0), c, atol=1e-9)


def test_degenerate_pole_has_rank_two():
    rng = np.random.default_rng(3)
    a, b = rng.normal(size=3), rng.normal(size=3)
    G = np.outer(a, a) + np.outer(b, b)
    rec = gp.synthetic_record([2.0, 5.0], [np.outer(a, a), G], 0.05, 80.0)
    poles = gp.poles_and_residues(rec)
    assert list(poles.ranks) == [1, 2]
    data = gp.residues_to_spectral_data(poles, rec)
    _, grams = gp.eigenspace_grams(data)
    assert np.allclose(grams[1], G, atol=1e-8)


def test_simulated_record_is_reciprocal(small_cycle):
    man, sig, _ = small_cycle
    rec = gp.simulate_green(man, sig, 5.0, 0.02)
    assert rec.reciprocity_error() < 1e-12
    assert np.all(rec.samples[0] == 0.0)


def test_simulated_record_gives_discrete_spectrum(small_cycle):
    man, sig, data = small_cycle
    rec = gp.simulate_green(man, sig, 150.0, 0.02)
    poles = gp.poles_and_residues(rec, n_max=6)
    ref_l, ref_g = gp.eigenspace_grams(data)
    assert np.allclose(poles.lambdas, ref_l[:6], rtol=1e-8, atol=1e-10)
    for k in range(6):
        assert np.abs(poles.spectral_gram(k) - ref_g[k]).max() < 1e-6


def test_rebuilt_dataset_carries_sigma_metadata(small_cycle):
    man, sig, data = small_cycle
    rec = gp.simulate_green(man, sig, 100.0, 0.02)
    rebuilt = gp.residues_to_spectral_data(gp.poles_and_residues(rec, n_max=4), rec)
    assert rebuilt.components == data.components
    assert np.allclose(rebuilt.weights, data.weights)
    assert rebuilt.manifold_id == data.manifold_id


def test_cfl_violation_is_rejected(small_cycle):
    man, sig, _ = small_cycle
    with pytest.raises((gp.GreenError, ValueError)):
        gp.simulate_green(man, sig, 5.0, 1.0)


def test_pole_json_round_trip_shapes():
    rec = gp.synthetic_record([1.0, 4.0], [np.eye(2), np.eye(2)], 0.05, 40.0)
    doc = gp.poles_and_residues(rec).to_json()
    assert np.asarray(doc["residues"]).shape == (2, 2, 2)
