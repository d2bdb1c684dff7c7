"""Acceptance checks shared by the test suite and ``verify``.

Every check builds its own small problem, compares a data-only result with
an independent oracle, and returns a :class:`Check`.  Reports contain no
timings so that repeated runs are byte-identical.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from . import blago, geometry_on_sigma as geo, green_pipeline as gp
from . import energy_flux as ef, response_reconstructor as rr, subdomain_spectra as ss
from . import transmission_oracle as to
from .manifold_forge import (build_manifold, carve_hypersurface, eigendecompose,
                             emit_spectral_data, square_ring, subdomain_dirichlet_spectrum,
                             torus_index)
from .signals import band_limited, smooth_pulse


@dataclass
class Check:
    number: int
    name: str
    passed: bool
    measured: dict = field(default_factory=dict)  # quantity -> (value, limit, relation)
    note: str = ""

    def line(self) -> str:
        parts = []
        for key, (val, lim, rel) in self.measured.items():
            parts.append(f"{key}={_fmt(val)} ({rel} {_fmt(lim)})")
        status = "PASS" if self.passed else "FAIL"
        tail = f" [{self.note}]" if self.note else ""
        return f"[{status}] {self.number:2d} {self.name}: " + ", ".join(parts) + tail

    def to_json(self) -> dict:
        return {"number": self.number, "name": self.name, "passed": self.passed,
                "measured": {k: {"value": _plain(v), "limit": _plain(l), "relation": r}
                             for k, (v, l, r) in self.measured.items()},
                "note": self.note}


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.3e}"


def _plain(x):
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    return float(x)


def _ok(measured: dict) -> bool:
    ops = {"<=": lambda a, b: a <= b, ">=": lambda a, b: a >= b, "<": lambda a, b: a < b,
           ">": lambda a, b: a > b, "==": lambda a, b: a == b}
    return all(ops[rel](val, lim) for val, lim, rel in measured.values())


def _rel(a, b) -> float:
    return float(np.abs(a - b).max() / max(np.abs(b).max(), 1e-300))


# ---------------------------------------------------------------------------


def check_blago() -> Check:
    man = build_manifold({"kind": "cycle", "n": 256})
    sig = carve_hypersurface(man, [[0], [100]], [50])
    basis = eigendecompose(man)
    data = emit_spectral_data(basis, sig, "cauchy", man)
    errs = []
    for dt in (1e-3, 5e-4, 2.5e-4):
        h = smooth_pulse(sig.size, [0], 0.6, 0.5, dt)
        f = smooth_pulse(sig.size, [1], 0.7, 0.5, dt, [0.5])
        fld = to.solve_transmission_time(man, sig, f, h, 2.0, dt)
        proj = basis.modes.T @ (man.mass * fld.frames[fld.frame_at(2.0)])
        c = blago.combined_coefficients(data, f, h, 2.0).values[0]
        errs.append(float(np.linalg.norm(proj - c) / np.linalg.norm(c)))
    m = {"err_dt1e-3": (errs[0], 1e-3, "<="), "reduction_x4": (errs[0] / errs[2], 3.0, ">=")}
    return Check(1, "wave coefficients vs transmission oracle", _ok(m), m)


def check_layer_algebra() -> Check:
    n = 128
    metric = 1 + 0.3 * np.sin(2 * np.pi * np.arange(n) / n)
    man = build_manifold({"kind": "cycle", "n": n, "metric": metric.tolist()})
    sig = carve_hypersurface(man, [[0], [50]], [25])
    basis = eigendecompose(man)
    data = emit_spectral_data(basis, sig, "cauchy", man)
    lam = -2.0
    S = rr.single_layer_from_data(data, lam).matrix
    D = rr.double_layer_from_data(data, lam)
    J = rr.naive_j(data, lam)
    err = max(_rel(S, to.layer_potential_matrix(basis, sig, lam, "S")),
              _rel(D, to.layer_potential_matrix(basis, sig, lam, "D")),
              _rel(J, to.layer_potential_matrix(basis, sig, lam, "J")))
    rng = np.random.default_rng(20)
    w = data.weights
    adj = 0.0
    for _ in range(20):
        f, h = rng.normal(size=sig.size), rng.normal(size=sig.size)
        lhs = np.sum(w * (D @ f) * h)
        rhs = np.sum(w * f * (J @ h))
        adj = max(adj, abs(lhs - rhs) / (np.linalg.norm(D, 2) * np.linalg.norm(f)
                                         * np.linalg.norm(h) * w.max()))
    f, h = rng.normal(size=sig.size), rng.normal(size=sig.size)
    fld = to.solve_transmission_frequency(man, sig, f, h, lam)
    v = to.single_layer_field(basis, sig, h, lam) - to.double_layer_field(basis, sig, f, lam)
    sup = _rel(fld.values, v)
    m = {"matrices": (err, 1e-12, "<="), "adjointness": (adj, 1e-12, "<="),
         "superposition": (sup, 1e-8, "<=")}
    return Check(2, "layer potentials from data", _ok(m), m)


def check_anchored_j() -> Check:
    n = 1024
    man = build_manifold({"kind": "cycle", "n": n})
    sig = carve_hypersurface(man, [[0], [400]], [200])
    basis = eigendecompose(man)
    data = emit_spectral_data(basis, sig, "cauchy", man)
    lam = -2.0
    ref = 0.5 * np.eye(sig.size) + to.layer_potential_matrix(basis, sig, lam, "J")
    trunc = data.truncated(64)
    jres = rr.j_operator(trunc, lam)
    nrm = np.linalg.norm(ref, 2)
    anchored = np.linalg.norm(jres.operator.matrix - ref, 2) / nrm
    naive = np.linalg.norm(jres.naive - ref, 2) / nrm
    h = geo.mesh_scale(data, 1)
    lo, hi = float(trunc.lambdas[-1]), h ** -2
    diag = rr.anchor_diagnostics(basis, sig, np.geomspace(lo, hi, 15))
    plat = diag.plateau(0.05, which="consistent")
    decades = np.log10(plat[1] / plat[0]) if plat else 0.0
    m = {"anchored": (anchored, 0.05, "<="), "anchored_minus_naive": (anchored - naive, 0.0, "<"),
         "plateau_decades": (decades, 1.0, ">=")}
    return Check(3, "anchored J operator", _ok(m), m)


def check_nd() -> Check:
    man = build_manifold({"kind": "cycle", "n": 128})
    sig = carve_hypersurface(man, [[0], [50]], [25])
    basis = eigendecompose(man)
    data = emit_spectral_data(basis, sig, "cauchy", man)
    T_full = rr.tune_anchor(basis, sig)
    trunc = data.truncated(32)
    full_err, trunc_err, asym = 0.0, 0.0, 0.0
    for lam in (-2.0, -5.0):
        for side in (-1, 1):
            ref = to.neumann_to_dirichlet_oracle(man, sig, side, lam)
            L = rr.recover_nd(data, lam, side, T=T_full)
            Lt = rr.recover_nd(trunc, lam, side)
            full_err = max(full_err, _rel(L.matrix, ref))
            trunc_err = max(trunc_err, _rel(Lt.matrix, ref))
            asym = max(asym, L.asymmetry(), Lt.asymmetry())
    m = {"full": (full_err, 1e-6, "<="), f"J={trunc.J}": (trunc_err, 0.02, "<="),
         "asymmetry": (asym, 1e-8, "<=")}
    return Check(4, "Neumann-to-Dirichlet recovery", _ok(m), m)


def _torus_pairs(sig, man, n_pairs, min_sep, seed):
    rng = np.random.default_rng(seed)
    coords = man.vertex_coords[sig.vertices]
    L = np.array([man.geometry_spec["lx"], man.geometry_spec["ly"]])
    pairs = []
    while len(pairs) < n_pairs:
        i, j = rng.choice(sig.size, 2, replace=False)
        d = np.abs(coords[i] - coords[j])
        d = np.minimum(d, L - d)
        if np.hypot(*d) >= min_sep and (i, j) not in pairs and (j, i) not in pairs:
            pairs.append((int(i), int(j)))
    return pairs


def check_varadhan() -> Check:
    errs = []
    for n in (256, 512):
        man = build_manifold({"kind": "cycle", "n": n})
        sig = carve_hypersurface(man, [[0], [n // 2]], [n // 4])
        data = emit_spectral_data(eigendecompose(man), sig, "dirichlet", man)
        dm = geo.varadhan_distances(data, dim=1)
        errs.append(abs(dm.values[0, 1] - np.pi) / np.pi)
    man = build_manifold({"kind": "torus", "nx": 64, "ny": 64})
    sig = carve_hypersurface(man, [square_ring(man, 20, 30, 12)], [torus_index(man, 20, 30)])
    data = emit_spectral_data(eigendecompose(man), sig, "dirichlet", man)
    pairs = _torus_pairs(sig, man, 10, 2.0 / 64, seed=5)
    sel = np.unique(np.ravel(pairs))
    pos = {int(s): k for k, s in enumerate(sel)}
    sub = dataclasses.replace(data, traces=data.traces[:, sel], weights=data.weights[sel],
                              coords=data.coords[sel],
                              components=(tuple(int(v) for v in sig.vertices[sel]),))
    dm = geo.varadhan_distances(sub, dim=2)
    G = geo.geodesic_distances(man, sig.vertices[sel])
    terr = max(abs(dm.values[pos[i], pos[j]] - G[pos[i], pos[j]]) / G[pos[i], pos[j]]
               for i, j in pairs)
    m = {"cycle_n512": (errs[1], 0.02, "<="), "refinement_gain": (errs[0] - errs[1], 0.0, ">"),
         "torus_pairs": (terr, 0.03, "<=")}
    return Check(5, "Varadhan distances on Sigma", _ok(m), m,
                 "torus pairs at least two mesh spacings apart")


def _subspec_cases():
    cyc = build_manifold({"kind": "cycle", "n": 16})
    cyc_sig = carve_hypersurface(cyc, [[0, 5], [9, 12]], [2, 10])
    tor = build_manifold({"kind": "torus", "nx": 32, "ny": 32})
    tor_sig = carve_hypersurface(tor, [square_ring(tor, 7, 9, 5), square_ring(tor, 23, 19, 7)],
                                 [torus_index(tor, 7, 9), torus_index(tor, 23, 19)])
    return [("cycle16", cyc, cyc_sig), ("torus32", tor, tor_sig)]


def check_subspectra() -> Check:
    full_err, half_err = 0.0, 0.0
    for _, man, sig in _subspec_cases():
        basis = eigendecompose(man)
        data = emit_spectral_data(basis, sig, "dirichlet", man)
        assigned = ss.assign_spectra(data)
        for lab in ss.LABELS:
            ref = subdomain_dirichlet_spectrum(man, sig, lab, 5)
            got = assigned.values[lab][:5]
            if got.size < ref.size:
                full_err = np.inf
                continue
            full_err = max(full_err, float(np.max(np.abs(got - ref) / ref)))
        half = data.truncated(man.vertex_count // 2)
        for sub in ("Sigma", "Sigma1", "Sigma2"):
            t_half = ss.maxmin_spectrum(half, sub, 5).t_values
            t_full = assigned.runs[sub].t_values[:5]
            half_err = max(half_err, float(np.max(np.abs(t_half - t_full) / t_full)))
    man = build_manifold({"kind": "cycle", "n": 16})
    sym = carve_hypersurface(man, [[0, 4], [8, 12]], [2, 10])
    try:
        ss.assign_spectra(emit_spectral_data(eigendecompose(man), sym, "dirichlet", man))
        raised = False
    except ss.SubspectrumError:
        raised = True
    m = {"full": (full_err, 1e-8, "<="), "J=N/2": (half_err, 0.02, "<="),
         "symmetric_rejected": (raised, True, "==")}
    return Check(6, "subdomain spectra", _ok(m), m, "J=N/2 compares the constrained runs")


def check_extended() -> Check:
    _, man, sig = _subspec_cases()[1]
    basis = eigendecompose(man)
    data = emit_spectral_data(basis, sig, "dirichlet", man)
    assigned = ss.assign_spectra(data)
    cert, proj, n_degenerate = 0.0, 0.0, 0
    for lab in ss.LABELS:
        ext = ss.extended_eigenfunctions(assigned, data, lab, basis, sig)[:8]
        cert = max(cert, max(e.certificate for e in ext))
        vals, kap = ss.oracle_kappas(basis, man, sig, lab, 8)
        for g in ss._clusters(vals, 1e-8):
            if g.size < 2 or g[-1] >= 7:
                continue
            n_degenerate += 1
            mine = np.flatnonzero(np.abs(assigned.values[lab] - vals[g[0]]) <= 1e-8 * vals[g[0]])
            proj = max(proj, ss.projector_distance(assigned.kappas[lab][:, mine], kap[:, g]))
    m = {"certificate": (cert, 1e-8, "<="), "projector": (proj, 1e-6, "<="),
         "degenerate_spaces": (n_degenerate, 1, ">=")}
    return Check(7, "extended eigenfunctions", _ok(m), m)


def check_energy_flux() -> Check:
    man = build_manifold({"kind": "cycle", "n": 256})
    sig = carve_hypersurface(man, [[0, 61], [132, 199]], [30, 165])
    data = emit_spectral_data(eigendecompose(man), sig, "dirichlet", man)
    assigned = ss.assign_spectra(data)
    rng = np.random.default_rng(8)
    err, scale, drift = 0.0, 0.0, 0.0
    for _ in range(3):
        F = band_limited(rng, data.component_slots(0), 0.0, 0.5, 2e-3, 40.0)
        rec = ef.energy_flux(data, assigned, "S1", F, 1.0)
        ref = ef.oracle_energy(man, sig, "S1", F, 1.0, 1e-4)
        err = max(err, abs(rec.flux - ref) / ref)
        rec2 = ef.energy_flux(data, assigned, "S1", F.scaled(2.0), 1.0)
        scale = max(scale, abs(rec2.flux / rec.flux - 4.0) / 4.0)
        later = ef.energy_flux(data, assigned, "S1", F, 1.5)
        drift = max(drift, abs(later.flux - rec.flux) / rec.flux)
    m = {"vs_ibvp": (err, 1e-2, "<="), "quadratic": (scale, 1e-6, "<="),
         "constancy": (drift, 1e-3, "<=")}
    return Check(8, "energy flux", _ok(m), m)


def check_controllability() -> Check:
    ranks = {}
    worst = 0.0
    for arc in (29, 32):
        man = build_manifold({"kind": "cycle", "n": 64})
        sig = carve_hypersurface(man, [[0], [arc]], [arc // 2])
        data = emit_spectral_data(eigendecompose(man), sig, "dirichlet", man)
        rng = np.random.default_rng(9)
        sources = [band_limited(rng, np.arange(2), -12.0, 12.0, 0.01, 25.0) for _ in range(512)]
        rep = blago.controllability_gram(data, sources, "H1", rtol=1e-8)
        ranks[arc] = rep.rank
        if arc == 29:
            worst = rep.worst_residual
    m = {"rank": (ranks[29], int(np.ceil(0.95 * 64)), ">="), "probe_residual": (worst, 1e-2, "<="),
         "symmetric_rank": (ranks[32], 64, "<")}
    return Check(9, "controllability rank", _ok(m), m)


def check_green() -> Check:
    man = build_manifold({"kind": "cycle", "n": 128})
    sig = carve_hypersurface(man, [[0, 37], [70, 101]], [20, 85])
    data = emit_spectral_data(eigendecompose(man), sig, "dirichlet", man)
    rec = gp.simulate_green(man, sig, 200.0, 0.02)
    poles = gp.poles_and_residues(rec, n_max=10)
    ref_l, ref_g = gp.eigenspace_grams(data)
    lam_err = float(np.max(np.abs(poles.lambdas - ref_l[:10]) / np.maximum(ref_l[:10], 1.0)))
    rank_ok = bool(np.all(poles.ranks[1:] == 2) and poles.ranks[0] == 1)
    rebuilt = gp.residues_to_spectral_data(poles, rec)
    proj = 0.0
    start = 0
    for k in range(10):
        idx = np.flatnonzero(np.abs(data.lambdas - ref_l[k]) <= 1e-8 * max(1.0, ref_l[k]))
        r = int(poles.ranks[k])
        proj = max(proj, ss.projector_distance(data.traces[idx].T,
                                               rebuilt.traces[start:start + r].T))
        start += r
    heat = 0.0
    same = data.truncated(rebuilt.J)
    for t in (0.1, 1.0):
        H1, _ = geo.heat_trace_matrix(rebuilt, t)
        H2, _ = geo.heat_trace_matrix(same, t)
        heat = max(heat, _rel(H1, H2))
    m = {"lambda": (lam_err, 1e-3, "<="), "pair_ranks": (rank_ok, True, "=="),
         "projector": (proj, 1e-6, "<="), "heat_trace": (heat, 1e-3, "<=")}
    return Check(10, "Green record to spectral data", _ok(m), m)


CHECKS = {
    "blago": check_blago,
    "layers": check_layer_algebra,
    "anchor": check_anchored_j,
    "nd": check_nd,
    "distances": check_varadhan,
    "subspec": check_subspectra,
    "extended": check_extended,
    "flux": check_energy_flux,
    "control": check_controllability,
    "green": check_green,
}


def run_suite(names=None) -> list[Check]:
    names = list(CHECKS) if names in (None, "all", ["all"]) else list(names)
    out = []
    for name in names:
        if name not in CHECKS:
            raise KeyError(f"unknown check {name!r}; choose from {', '.join(CHECKS)}")
        out.append(CHECKS[name]())
    return out
