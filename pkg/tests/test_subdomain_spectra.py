import dataclasses

import numpy as np
import pytest

from sigmaspec import subdomain_spectra as ss
from sigmaspec.manifold_forge import (build_manifold, carve_hypersurface, eigendecompose,
                                      emit_spectral_data, subdomain_dirichlet_spectrum)


def test_unconstrained_run_reproduces_spectrum(split_cycle):
    data = split_cycle[3]
    run = ss.maxmin_spectrum(data, "none")
    assert np.allclose(run.t_values, data.lambdas[:run.t_values.size], rtol=1e-10, atol=1e-10)


def test_constrained_sources_satisfy_constraint(split_cycle):
    data = split_cycle[3]
    space = ss.constrained_sources(data, "Sigma1")
    slots = ss.subset_slots(data, "Sigma1")
    assert np.abs(data.traces[:, slots].T @ space.basis).max() < 1e-10


def test_assigned_spectra_match_oracles(split_cycle):
    man, sig, _, data = split_cycle
    assigned = ss.assign_spectra(data)
    for lab in ss.LABELS:
        ref = subdomain_dirichlet_spectrum(man, sig, lab, 5)
        assert np.allclose(assigned.values[lab][:5], ref, rtol=1e-8), lab


def test_symmetric_split_is_ambiguous():
    man = build_manifold({"kind": "cycle", "n": 32})
    sig = carve_hypersurface(man, [[0, 8], [16, 24]], [4, 20])
    data = emit_spectral_data(eigendecompose(man), sig, "dirichlet", man)
    with pytest.raises(ss.SubspectrumError):
        ss.assign_spectra(data)


def test_assignment_needs_two_components(split_cycle):
    data = split_cycle[3]
    merged = dataclasses.replace(data, components=(sum(data.components, ()),))
    with pytest.raises(ss.SubspectrumError):
        ss.assign_spectra(merged)


def test_extended_eigenfunctions_vanish_off_their_piece(split_cycle):
    man, sig, basis, data = split_cycle
    assigned = ss.assign_spectra(data)
    for lab in ("S1", "M\\S2"):
        ext = ss.extended_eigenfunctions(assigned, data, lab, basis, sig)
        assert max(e.certificate for e in ext[:5]) < 1e-8


def test_extended_coefficients_match_oracle_projectors(split_cycle):
    man, sig, basis, data = split_cycle
    assigned = ss.assign_spectra(data)
    ext = ss.extended_eigenfunctions(assigned, data, "S2", basis, sig)
    _, kap = ss.oracle_kappas(basis, man, sig, "S2", 3)
    got = np.stack([e.kappa for e in ext[:3]], axis=1)
    assert ss.projector_distance(got, kap) < 1e-6


def test_projector_distance_ignores_basis_choice(rng):
    A = np.linalg.qr(rng.normal(size=(10, 3)))[0]
    Q = np.linalg.qr(rng.normal(size=(3, 3)))[0]
    assert ss.projector_distance(A, A @ Q) < 1e-12
    B = np.linalg.qr(rng.normal(size=(10, 3)))[0]
    assert ss.projector_distance(A, B) > 0.1


def test_unknown_subset_is_rejected(split_cycle):
    with pytest.raises(ss.SubspectrumError):
        ss.subset_slots(split_cycle[3], "Sigma3")
