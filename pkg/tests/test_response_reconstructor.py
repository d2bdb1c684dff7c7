import dataclasses

import numpy as np
import pytest

from sigmaspec import response_reconstructor as rr
from sigmaspec import transmission_oracle as to
from sigmaspec.signals import smooth_pulse


def test_single_layer_matches_oracle(cycle128):
    _, sig, basis, data = cycle128
    S = rr.single_layer_from_data(data, -2.0).matrix
    assert np.allclose(S, to.layer_potential_matrix(basis, sig, -2.0, "S"), rtol=1e-12)


def test_single_layer_is_weighted_symmetric(cycle128):
    data = cycle128[3]
    S = rr.single_layer_from_data(data, -1.0)
    assert S.asymmetry() < 1e-13


def test_lambda_near_spectrum_is_rejected(cycle128):
    data = cycle128[3]
    with pytest.raises(rr.ResponseError):
        rr.single_layer_from_data(data, float(data.lambdas[5]))


def test_cauchy_operators_need_normal_traces(cycle128):
    with pytest.raises(rr.ResponseError):
        rr.double_layer_from_data(cycle128[3].as_dirichlet(), -2.0)


def test_anchored_j_closed_form_equals_naive_difference(cycle128):
    data = cycle128[3].truncated(40)
    jres = rr.j_operator(data, -2.0)
    T = jres.anchor_T
    ref = rr.naive_j(data, -2.0) - rr.naive_j(data, 1j * T)
    assert np.allclose(jres.closed_form, ref.real if np.isrealobj(jres.closed_form) else ref,
                       atol=1e-10)


def test_full_basis_j_matches_oracle(cycle128):
    _, sig, basis, data = cycle128
    T = rr.tune_anchor(basis, sig)
    jres = rr.j_operator(data, -2.0, T=T)
    ref = to.layer_potential_matrix(basis, sig, -2.0, "J")
    assert np.abs(rr.centered_j(jres) - ref).max() < 1e-8 * np.abs(ref).max()


def test_response_is_trace_of_transmission_field(cycle128, rng):
    man, sig, basis, data = cycle128
    T = rr.tune_anchor(basis, sig)
    f, h = rng.normal(size=sig.size), rng.normal(size=sig.size)
    got = rr.response(data, f, h, -3.0, T=T)
    fld = to.solve_transmission_frequency(man, sig, f, h, -3.0)
    assert np.abs(got - fld.plus).max() < 1e-8 * np.abs(fld.plus).max()


def test_nd_maps_match_neumann_oracles(cycle128):
    man, sig, basis, data = cycle128
    T = rr.tune_anchor(basis, sig)
    for side in (-1, 1):
        L = rr.recover_nd(data, -5.0, side, T=T)
        ref = to.neumann_to_dirichlet_oracle(man, sig, side, -5.0)
        assert np.abs(L.matrix - ref).max() < 1e-6 * np.abs(ref).max()
        assert L.asymmetry() < 1e-8


def test_operators_invariant_under_eigenspace_rotation(cycle128):
    # uniform-cycle eigenvalues pair up; rotating each pair is a change of gauge
    _, _, _, data = cycle128
    tr, nt = data.traces.copy(), data.normal_traces.copy()
    for k in range(1, data.J - 1, 2):
        if np.isclose(data.lambdas[k], data.lambdas[k + 1], rtol=1e-9):
            a = 0.3 + 0.1 * k
            Q = np.array([[np.cos(a), -np.sin(a)], [np.sin(a), np.cos(a)]])
            tr[k:k + 2] = Q @ tr[k:k + 2]
            nt[k:k + 2] = Q @ nt[k:k + 2]
    rot = dataclasses.replace(data, traces=tr, normal_traces=nt)
    for lam in (-2.0, -7.5):
        a = rr.single_layer_from_data(data, lam).matrix
        b = rr.single_layer_from_data(rot, lam).matrix
        assert np.allclose(a, b, rtol=1e-11)
        assert np.allclose(rr.double_layer_from_data(data, lam),
                           rr.double_layer_from_data(rot, lam), rtol=1e-9, atol=1e-12)


def test_hidden_side_pair_matches_time_oracle(cycle128):
    man, sig, _, data = cycle128
    errs = []
    for dt in (4e-3, 2e-3):
        h = smooth_pulse(sig.size, [0], 0.5, 0.3, dt)
        pair = rr.hidden_side_dtn(data.as_dirichlet(), rr.known_side_from(sig), h, 2.0, dt)
        fld = to.solve_transmission_time(man, sig, None, h, 2.0, dt, t0=0.0)
        u, v = fld.frames, sig.vertices
        acc = np.zeros_like(u)
        acc[1:-1] = (u[2:] - 2 * u[1:-1] + u[:-2]) / dt ** 2
        # M_plus-side flux in time: (K_plus u + m_plus u'') / w at Sigma
        plus = (u @ sig.K_plus.tocsr()[v].T.toarray()
                + sig.mass_plus[v] * acc[:, v]) / sig.surface_weights
        s = slice(2, -2)
        assert np.abs(pair.dirichlet - fld.plus).max() < 1e-4 * np.abs(fld.plus).max()
        errs.append(np.abs(pair.neumann[s] - plus[s]).max() / np.abs(plus[s]).max())
    assert errs[1] < 1e-4
    assert errs[0] / errs[1] > 3.0


def test_hidden_side_rejects_mismatched_sigma(cycle128, split_cycle):
    h = smooth_pulse(2, [0], 0.5, 0.3, 0.01)
    with pytest.raises(rr.ResponseError):
        rr.hidden_side_dtn(cycle128[3], rr.known_side_from(split_cycle[1]), h, 1.0, 0.01)
