import numpy as np
import pytest

from sigmaspec import energy_flux as ef
from sigmaspec import subdomain_spectra as ss
from sigmaspec.blago import sigma_trace
from sigmaspec.signals import SourceSignal, band_limited


@pytest.fixture(scope="module")
def flux_case(split_cycle):
    man, sig, _, data = split_cycle
    return man, sig, data, ss.assign_spectra(data)


def test_zero_boundary_data_gives_zero_source(flux_case):
    _, _, data, assigned = flux_case
    slots = ef.bounding_slots(data, "S1")
    F = SourceSignal(np.zeros((51, slots.size)), 0.01, 0.0, slots)
    hF, rt = ef.solve_hF(data, F)
    assert not np.any(hF.samples)
    assert ef.energy_flux(data, assigned, "S1", F, 1.0, hF=hF).flux == 0.0


def test_source_reproduces_boundary_data(flux_case, rng):
    _, _, data, _ = flux_case
    slots = ef.bounding_slots(data, "S1")
    rt = []
    for dt in (2e-4, 1e-4):
        # sampled on the solver step: a kinked F would need impulses in h_F
        F = band_limited(np.random.default_rng(7), slots, 0.0, 0.4, dt, 30.0)
        rt.append(ef.solve_hF(data, F)[1])
    assert rt[1] < 1e-6
    assert rt[0] / rt[1] > 3.0


def test_off_grid_trace_matches(flux_case, rng):
    _, _, data, _ = flux_case
    slots = ef.bounding_slots(data, "S2")
    F = band_limited(rng, slots, 0.1, 0.3, 1e-3, 20.0)
    hF, _ = ef.solve_hF(data, F, dt=1e-4)
    t = np.array([0.1234, 0.2718, 0.3579])
    got = sigma_trace(data, hF, t)[:, slots]
    assert np.abs(got - F.at(t)).max() < 1e-5


def test_flux_matches_ibvp_energy(flux_case, rng):
    man, sig, data, assigned = flux_case
    slots = ef.bounding_slots(data, "S1")
    F = band_limited(rng, slots, 0.0, 0.5, 2e-3, 30.0)
    rec = ef.energy_flux(data, assigned, "S1", F, 0.8)
    ref = ef.oracle_energy(man, sig, "S1", F, 0.8, 1e-4)
    assert abs(rec.flux - ref) / ref < 1e-2


def test_flux_is_quadratic_and_constant(flux_case, rng):
    _, _, data, assigned = flux_case
    slots = ef.bounding_slots(data, "M\\S2")
    F = band_limited(rng, slots, 0.0, 0.4, 2e-3, 25.0)
    a = ef.energy_flux(data, assigned, "M\\S2", F, 0.6).flux
    b = ef.energy_flux(data, assigned, "M\\S2", F.scaled(2.0), 0.6).flux
    c = ef.energy_flux(data, assigned, "M\\S2", F, 1.1).flux
    assert abs(b / a - 4.0) < 1e-6
    assert abs(c - a) / a < 1e-3


def test_source_matches_oracle_flux_jump(flux_case, rng):
    man, sig, data, _ = flux_case
    slots = ef.bounding_slots(data, "S1")
    F = band_limited(rng, slots, 0.0, 0.3, 2e-3, 20.0)
    hF, _ = ef.solve_hF(data, F, T=0.3)
    times, h = ef.oracle_hF(man, sig, "S1", F, 0.3, 1e-4)
    inner = (times > 0.02) & (times < 0.28)
    got = hF.at(times[inner])
    assert np.abs(got - h[inner]).max() < 2e-2 * np.abs(h[inner]).max()


def test_flux_before_source_ends_is_rejected(flux_case, rng):
    _, _, data, assigned = flux_case
    F = band_limited(rng, ef.bounding_slots(data, "S1"), 0.0, 0.5, 2e-3, 20.0)
    with pytest.raises(ef.FluxError):
        ef.energy_flux(data, assigned, "S1", F, 0.4)


def test_unknown_region_is_rejected(flux_case):
    with pytest.raises(ef.FluxError):
        ef.bounding_slots(flux_case[2], "S3")
