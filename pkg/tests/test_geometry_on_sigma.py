import numpy as np
import pytest

from sigmaspec import geometry_on_sigma as geo
from sigmaspec.manifold_forge import (build_manifold, carve_hypersurface, eigendecompose,
                                      emit_spectral_data, square_ring, torus_index)


def test_heat_trace_matches_expm_oracle(cycle128):
    man, sig, _, data = cycle128
    t = 0.05
    H, tail = geo.heat_trace_matrix(data, t)
    ref = geo.heat_oracle(man, int(sig.vertices[1]), t)[sig.vertices]
    assert np.allclose(H[:, 1], ref, rtol=1e-9, atol=1e-12)
    assert tail < 1e-12


def test_heat_trace_is_symmetric(cycle128):
    H, _ = geo.heat_trace_matrix(cycle128[3], 0.1)
    assert np.allclose(H, H.T)


def test_geodesics_on_uniform_cycle_are_arc_lengths():
    man = build_manifold({"kind": "cycle", "n": 64})
    G = geo.geodesic_distances(man, [0, 10, 40])
    h = 2 * np.pi / 64
    assert np.allclose(G, h * np.array([[0, 10, 24], [10, 0, 30], [24, 30, 0]]))


def test_torus_geodesics_approach_euclidean():
    man = build_manifold({"kind": "torus", "nx": 32, "ny": 32})
    i, j = 0, 7 + 32 * 3  # offset (7, 3) cells
    G = geo.geodesic_distances(man, [i, j])
    exact = np.hypot(7, 3) / 32
    assert abs(G[0, 1] - exact) / exact < 0.01


def test_varadhan_antipodal_distance_on_cycle():
    man = build_manifold({"kind": "cycle", "n": 256})
    sig = carve_hypersurface(man, [[0], [128]], [64])
    data = emit_spectral_data(eigendecompose(man), sig, "dirichlet", man)
    dm = geo.varadhan_distances(data, dim=1)
    assert abs(dm.values[0, 1] - np.pi) / np.pi < 0.02
    assert dm.values[0, 0] == 0.0
    assert np.allclose(dm.values, dm.values.T)


def test_varadhan_follows_metric():
    # doubling the metric density doubles every distance
    n = 128
    sig_parts = [[0], [40]]
    out = []
    for scale in (1.0, 2.0):
        man = build_manifold({"kind": "cycle", "n": n, "metric": [scale] * n})
        sig = carve_hypersurface(man, sig_parts, [20])
        data = emit_spectral_data(eigendecompose(man), sig, "dirichlet", man)
        out.append(geo.varadhan_distances(data, dim=1).values)
    assert abs(out[1][0, 1] / out[0][0, 1] - 2.0) < 0.03


def test_varadhan_on_split_cycle_within_coarse_mesh_error(split_cycle):
    man, sig, _, data = split_cycle
    dm = geo.varadhan_distances(data, dim=1)
    G = geo.geodesic_distances(man, sig.vertices)
    off = ~np.eye(sig.size, dtype=bool)
    assert np.max(np.abs(dm.values[off] - G[off]) / G[off]) < 0.03
    # defects of the triangle inequality stay at the same relative level
    assert dm.triangle_violation() < 0.03 * dm.values.max()


def test_intrinsic_distances_are_a_path_metric():
    man = build_manifold({"kind": "torus", "nx": 32, "ny": 32})
    ring = square_ring(man, 16, 16, 6)
    sig = carve_hypersurface(man, [ring], [torus_index(man, 16, 16)])
    data = emit_spectral_data(eigendecompose(man), sig, "dirichlet", man)
    dm = geo.varadhan_distances(data, dim=2)
    eps = 3 * geo.nearest_neighbor_scale(dm)
    di = geo.intrinsic_distances(dm, eps)
    assert di.kind == "intrinsic"
    assert di.triangle_violation() <= 1e-12
    # near-opposite corners: half the perimeter along Sigma, a diagonal across
    i, j = ring.index(torus_index(man, 11, 10)), ring.index(torus_index(man, 21, 22))
    assert di.values[i, j] > 1.2 * dm.values[i, j]


def test_distance_matrix_json_round_trip_keys(cycle128):
    dm = geo.varadhan_distances(cycle128[3].as_dirichlet(), dim=1)
    doc = dm.to_json()
    assert np.allclose(np.asarray(doc["values"]), dm.values)
