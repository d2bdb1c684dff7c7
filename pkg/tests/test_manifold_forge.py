import numpy as np
import pytest

from sigmaspec.manifold_forge import (ManifoldError, build_manifold, carve_hypersurface,
                                      check_disjointness, eigendecompose, emit_spectral_data,
                                      region_vertices, square_ring, subdomain_dirichlet_spectrum,
                                      torus_index)


def cycle_eigenvalues(n, length=2 * np.pi):
    h = length / n
    return np.sort((2 - 2 * np.cos(2 * np.pi * np.arange(n) / n)) / h ** 2)


def test_uniform_cycle_spectrum_is_closed_form():
    man = build_manifold({"kind": "cycle", "n": 40})
    basis = eigendecompose(man)
    assert np.allclose(basis.lambdas, cycle_eigenvalues(40), rtol=1e-10, atol=1e-10)


def test_modes_are_mass_orthonormal():
    metric = 1 + 0.4 * np.cos(2 * np.pi * np.arange(50) / 50)
    man = build_manifold({"kind": "cycle", "n": 50, "metric": metric.tolist()})
    V = eigendecompose(man).modes
    G = V.T @ (man.mass[:, None] * V)
    assert np.abs(G - np.eye(50)).max() < 1e-10


def test_zero_mode_is_constant():
    man = build_manifold({"kind": "torus", "nx": 8, "ny": 8})
    basis = eigendecompose(man)
    assert basis.lambdas[0] == 0.0
    assert np.allclose(basis.modes[:, 0], 1 / np.sqrt(man.volume))


def test_uniform_torus_spectrum_is_sum_of_cycles():
    man = build_manifold({"kind": "torus", "nx": 8, "ny": 10})
    ax = cycle_eigenvalues(8, 1.0)
    ay = cycle_eigenvalues(10, 1.0)
    ref = np.sort((ax[:, None] + ay[None, :]).ravel())
    assert np.allclose(eigendecompose(man).lambdas, ref, rtol=1e-9, atol=1e-9)


def test_manifold_id_depends_on_metric():
    a = build_manifold({"kind": "cycle", "n": 16})
    b = build_manifold({"kind": "cycle", "n": 16, "metric": [1.1] * 16})
    assert a.id != b.id
    assert a.id == build_manifold({"kind": "cycle", "n": 16}).id


def test_nonpositive_metric_is_rejected():
    with pytest.raises(ManifoldError):
        build_manifold({"kind": "cycle", "n": 16, "metric": [0.0] * 16})


def test_carve_labels_regions(split_cycle):
    man, sig, _, _ = split_cycle
    s1 = region_vertices(sig, "S1")
    s2 = region_vertices(sig, "S2")
    assert set(s1) == set(range(1, 29))
    assert set(s2) == set(range(53, 77))
    rest = region_vertices(sig, "M\\S")
    assert len(s1) + len(s2) + len(rest) + sig.size == man.vertex_count


def test_surface_weights_split_mass(split_cycle):
    man, sig, _, _ = split_cycle
    v = sig.vertices
    assert np.allclose(sig.mass_minus[v] + sig.mass_plus[v], man.mass[v])


def test_torus_ring_encloses_its_seed():
    man = build_manifold({"kind": "torus", "nx": 16, "ny": 16})
    sig = carve_hypersurface(man, [square_ring(man, 8, 8, 3)], [torus_index(man, 8, 8)])
    inside = region_vertices(sig, "S1")
    assert inside.size == 5 * 5
    assert torus_index(man, 8, 8) in inside


def test_truncation_keeps_whole_clusters(cycle128):
    _, _, _, data = cycle128
    t = data.truncated(32)
    # eigenvalues of the uniform cycle come in pairs, so 32 splits one
    assert t.J == 33
    assert np.array_equal(t.lambdas, data.lambdas[:33])


def test_dirichlet_data_drops_normal_traces(cycle128):
    _, _, _, data = cycle128
    d = data.as_dirichlet()
    assert d.kind == "dirichlet" and d.normal_traces is None


def test_subdomain_spectrum_of_arc_is_closed_form(split_cycle):
    man, sig, _, _ = split_cycle
    # S1 is a path of 28 interior vertices with Dirichlet ends
    h = 2 * np.pi / 96
    k = np.arange(1, 6)
    ref = (2 - 2 * np.cos(np.pi * k / 29)) / h ** 2
    got = subdomain_dirichlet_spectrum(man, sig, "S1", 5)
    assert np.allclose(got, ref, rtol=1e-10)


def test_symmetric_split_violates_disjointness():
    man = build_manifold({"kind": "cycle", "n": 32})
    sig = carve_hypersurface(man, [[0, 8], [16, 24]], [4, 20])
    rep = check_disjointness(man, sig, 5, tau=1e-8)
    assert not rep.passes
    assert rep.closest == ("S1", "S2")


def test_asymmetric_split_passes_disjointness(split_cycle):
    man, sig, _, _ = split_cycle
    assert check_disjointness(man, sig, 5, tau=1e-8).passes


def test_emit_rejects_foreign_basis(split_cycle, cycle128):
    _, sig, _, _ = split_cycle
    _, _, basis, _ = cycle128
    with pytest.raises(ManifoldError):
        emit_spectral_data(basis, sig)
