"""Command-line driver: build data, run each reconstruction, verify against oracles.

Subcommands exchange JSON files, so any stage can be rerun on its own.  In
``--mode blind`` only the dataset is used; operations that need the manifold
(oracles, Green simulation) are refused.
"""
from __future__ import annotations

import argparse
import ast
import itertools
import logging
import math
import operator
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import acceptance, io
from .manifold_forge import (DiscreteManifold, ManifoldError, build_manifold, carve_hypersurface,
                             eigendecompose, emit_spectral_data, grid_circle, square_ring,
                             subdomain_dirichlet_spectrum, torus_index)

log = logging.getLogger("sigmaspec")


class ConfigError(ValueError):
    pass


class BlindModeError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# restricted metric expressions

_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv}
_FUNCS = {"sin": np.sin, "cos": np.cos, "exp": np.exp}
_CONSTS = {"pi": math.pi, "e": math.e}


def eval_metric_expr(expr: str, env: dict) -> np.ndarray:
    """Evaluate ``expr`` over coordinate arrays using + - * / sin cos exp and constants."""
    try:
        tree = ast.parse(expr, mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"bad metric expression {expr!r}: {exc.msg}") from None

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
                and not isinstance(node.value, bool):
            return float(node.value)
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            v = ev(node.operand)
            return -v if isinstance(node.op, ast.USub) else v
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) \
                and node.func.id in _FUNCS and len(node.args) == 1 and not node.keywords:
            return _FUNCS[node.func.id](ev(node.args[0]))
        if isinstance(node, ast.Name):
            if node.id in env:
                return env[node.id]
            if node.id in _CONSTS:
                return _CONSTS[node.id]
            raise ConfigError(f"unknown name {node.id!r} in metric expression")
        raise ConfigError(f"unsupported syntax in metric expression: {ast.dump(node)[:40]}")

    with np.errstate(all="raise"):
        try:
            out = ev(tree)
        except FloatingPointError as exc:
            raise ConfigError(f"metric expression failed: {exc}") from None
    return out


# ---------------------------------------------------------------------------
# configuration


@dataclass
class PipelineConfig:
    geometry: str = "cycle"
    n: int = 128
    nx: int = 32
    ny: int = 32
    metric_expr: str | None = None
    sigma: str | None = None
    seeds: str | None = None
    trunc_J: int | None = None
    mode: str = "test"
    seed: int = 0
    out: Path = field(default_factory=lambda: Path("."))

    def __post_init__(self):
        if self.mode not in ("test", "blind"):
            raise ConfigError(f"mode must be test or blind, got {self.mode!r}")
        if self.geometry not in ("cycle", "torus"):
            raise ConfigError(f"geometry must be cycle or torus, got {self.geometry!r}")

    def require_test(self, what: str) -> None:
        if self.mode == "blind":
            raise BlindModeError(f"{what} needs the manifold and is refused in blind mode")

    def geometry_spec(self) -> dict:
        if self.geometry == "cycle":
            spec = {"kind": "cycle", "n": self.n}
            if self.metric_expr:
                s = 2 * math.pi * np.arange(self.n) / self.n
                a = np.broadcast_to(eval_metric_expr(self.metric_expr, {"s": s, "x": s}),
                                    (self.n,))
                spec["metric"] = [float(v) for v in a]
            return spec
        spec = {"kind": "torus", "nx": self.nx, "ny": self.ny}
        if self.metric_expr:
            yy, xx = np.divmod(np.arange(self.nx * self.ny), self.nx)
            c = eval_metric_expr(self.metric_expr, {"x": xx / self.nx, "y": yy / self.ny})
            spec["conformal"] = np.broadcast_to(c, (self.nx * self.ny,)).reshape(
                self.ny, self.nx).tolist()
        return spec


def _arc_lengths(n: int, b: int, c: int, d: int) -> list[int]:
    # S1, S2, the two arcs of M\S, M\S1, M\S2
    return [b, d - c, c - b, n - d, n - b, n - (d - c)]


def default_sigma(cfg: PipelineConfig, resonance: int | None = None) -> str:
    """Two arcs whose pieces share no Dirichlet eigenvalue among the lowest few.

    Arcs of lengths ``p`` and ``q`` share an eigenvalue at mode ``k <= K`` iff
    ``p / gcd(p, q) <= K``; the nearest arcs to fixed proportions that avoid
    this are used.  ``K`` defaults to ``min(12, n // 8)``.
    """
    if cfg.geometry == "torus":
        return "ring:7,9,5;ring:23,19,7"
    n = cfg.n
    resonance = min(12, max(n // 8, 2)) if resonance is None else resonance
    base = np.array([0.29, 0.55, 0.79]) * n
    best = None
    for shift in itertools.product(range(-3, 4), repeat=3):
        b, c, d = (int(round(v)) + s for v, s in zip(base, shift))
        L = _arc_lengths(n, b, c, d)
        if min(L) < 2:
            continue
        # the two arcs of M\S are one region, so they may share eigenvalues
        pairs = [(L[i], L[j]) for i, j in itertools.permutations(range(6), 2)
                 if {i, j} != {2, 3}]
        if all(p // math.gcd(p, q) > resonance for p, q in pairs):
            cost = sum(abs(v) for v in shift)
            if best is None or cost < best[0]:
                best = (cost, b, c, d)
    if best is None:
        raise ConfigError(f"no non-resonant default Sigma for n={n}; pass --sigma")
    _, b, c, d = best
    return f"0,{b};{c},{d}"


def parse_sigma(man: DiscreteManifold, text: str, seeds: str | None):
    """Components and flood-fill seeds from ``a,b;c,d`` or ``ring:x,y,r;circle:x:5``."""
    comps, auto = [], []
    for part in text.split(";"):
        part = part.strip()
        if part.startswith("ring:"):
            cx, cy, r = (int(v) for v in part[5:].split(","))
            comps.append(square_ring(man, cx, cy, r))
            auto.append(torus_index(man, cx, cy))
        elif part.startswith("circle:"):
            _, axis, idx = part.split(":")
            comps.append(grid_circle(man, axis, int(idx)))
        else:
            verts = [int(v) for v in part.split(",") if v.strip()]
            if not verts:
                raise ConfigError(f"empty Sigma component in {text!r}")
            comps.append(verts)
            if len(verts) >= 2 and man.dim == 1:
                auto.append((verts[0] + 1) % man.vertex_count)
    if man.dim == 1 and all(len(c) == 1 for c in comps) and len(comps) >= 2:
        a, b = comps[0][0], comps[1][0]
        auto = [(a + ((b - a) % man.vertex_count) // 2) % man.vertex_count]
    if seeds:
        chosen = []
        for s in seeds.split(";"):
            vals = [int(v) for v in s.split(",")]
            chosen.append(vals[0] if len(vals) == 1 else torus_index(man, vals[0], vals[1]))
        auto = chosen
    return comps, auto


def forge(cfg: PipelineConfig, kind: str = "cauchy"):
    man = build_manifold(cfg.geometry_spec())
    comps, seeds = parse_sigma(man, cfg.sigma or default_sigma(cfg), cfg.seeds)
    sig = carve_hypersurface(man, comps, seeds)
    basis = eigendecompose(man)
    data = emit_spectral_data(basis, sig, kind, man)
    return man, sig, basis, data


def _load_or_forge(cfg: PipelineConfig, path: str | None, kind: str):
    if path:
        data = io.load_dataset(path)
        man = sig = basis = None
        if cfg.mode == "test":
            man, sig, basis, _ = forge(cfg, kind)
            if man.id != data.manifold_id:
                log.warning("dataset %s does not come from the configured geometry", path)
                man = sig = basis = None
    else:
        cfg.require_test("forging data in-process")
        man, sig, basis, data = forge(cfg, kind)
    if cfg.trunc_J:
        data = data.truncated(cfg.trunc_J)
    return man, sig, basis, data


# ---------------------------------------------------------------------------
# report helpers


@dataclass
class Report:
    stage: str
    checks: list = field(default_factory=list)
    results: dict = field(default_factory=dict)

    def compare(self, name: str, value: float, limit: float, relation: str = "<=") -> None:
        ok = value <= limit if relation == "<=" else value >= limit
        self.checks.append({"name": name, "value": float(value), "limit": float(limit),
                            "relation": relation, "passed": bool(ok)})

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks)

    def to_json(self) -> dict:
        return {"stage": self.stage, "passed": self.passed, "checks": self.checks,
                "results": self.results}

    def summary(self) -> str:
        lines = [f"{self.stage}: {'PASS' if self.passed else 'FAIL'}"]
        for c in self.checks:
            mark = "ok " if c["passed"] else "BAD"
            lines.append(f"  {mark} {c['name']}: {c['value']:.3e} {c['relation']} {c['limit']:.3e}")
        return "\n".join(lines) + "\n"


def _emit(cfg: PipelineConfig, report: Report, name: str) -> int:
    cfg.out.mkdir(parents=True, exist_ok=True)
    io.write_json(cfg.out / f"{name}.json", report.to_json())
    text = report.summary()
    (cfg.out / f"{name}.txt").write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return 0 if report.passed else 1


# ---------------------------------------------------------------------------
# subcommands


def cmd_forge(cfg: PipelineConfig, args) -> int:
    man, sig, basis, data = forge(cfg, args.kind)
    if cfg.trunc_J:
        data = data.truncated(cfg.trunc_J)
    cfg.out.mkdir(parents=True, exist_ok=True)
    io.save_dataset(cfg.out / "dataset.json", data)
    rep = Report("forge", results={"manifold_id": data.manifold_id, "J": data.J,
                                   "sigma_size": data.sigma_size})
    return _emit(cfg, rep, "forge")


def cmd_spectra(cfg: PipelineConfig, args) -> int:
    _, _, _, data = _load_or_forge(cfg, args.data, "cauchy")
    cfg.out.mkdir(parents=True, exist_ok=True)
    io.save_dataset(cfg.out / f"dataset_J{data.J}.json", data)
    rep = Report("spectra", results={"J": data.J, "lambdas": data.lambdas[:args.show].tolist()})
    return _emit(cfg, rep, "spectra")


def cmd_distances(cfg: PipelineConfig, args) -> int:
    from . import geometry_on_sigma as geo

    man, sig, _, data = _load_or_forge(cfg, args.data, "dirichlet")
    dim = 1 if data.coords.shape[1] == 1 else 2
    dm = geo.varadhan_distances(data, dim=dim)
    rep = Report("distances", results={"distances": dm.to_json()})
    if man is not None:
        G = geo.geodesic_distances(man, sig.vertices)
        m = G >= 2 * geo.mesh_scale(data, dim)  # adjacent pairs sit below the heat window
        rep.compare("max relative error vs graph geodesics",
                    float(np.max(np.abs(dm.values[m] - G[m]) / G[m])), args.tol)
    return _emit(cfg, rep, "distances")


def cmd_respond(cfg: PipelineConfig, args) -> int:
    from . import response_reconstructor as rr

    man, sig, basis, data = _load_or_forge(cfg, args.data, "cauchy")
    jres = rr.j_operator(data, args.lam)
    R_f, R_h = rr.response_matrices(data, args.lam, jres)
    rep = Report("respond", results={"J": jres.operator.to_json(), "R_f": R_f, "R_h": R_h,
                                     "anchor_T": jres.anchor_T})
    if basis is not None and data.J == basis.J:
        from .transmission_oracle import layer_potential_matrix

        ref = layer_potential_matrix(basis, sig, args.lam, "J")
        err = np.abs(rr.centered_j(jres) - ref).max() / np.abs(ref).max()
        rep.compare("J operator vs full-basis oracle", float(err), args.tol)
    return _emit(cfg, rep, "respond")


def cmd_nd(cfg: PipelineConfig, args) -> int:
    from . import response_reconstructor as rr

    man, sig, basis, data = _load_or_forge(cfg, args.data, "cauchy")
    # with the full basis the anchor can be tuned against the exact operator
    kw = {"T": rr.tune_anchor(basis, sig)} if basis is not None and data.J == basis.J else {}
    L = rr.recover_nd(data, args.lam, args.side, **kw)
    rep = Report("nd", results={"operator": L.to_json()})
    rep.compare("asymmetry", L.asymmetry(), 1e-8)
    if man is not None:
        from .transmission_oracle import neumann_to_dirichlet_oracle

        ref = neumann_to_dirichlet_oracle(man, sig, args.side, args.lam)
        rep.compare("ND map vs subdomain Neumann oracle",
                    float(np.abs(L.matrix - ref).max() / np.abs(ref).max()), args.tol)
    return _emit(cfg, rep, "nd")


def cmd_subspec(cfg: PipelineConfig, args) -> int:
    from . import subdomain_spectra as ss

    man, sig, _, data = _load_or_forge(cfg, args.data, "dirichlet")
    assigned = ss.assign_spectra(data, n_max=args.n_max, truncated=bool(cfg.trunc_J))
    rep = Report("subspec", results={"spectra": {lab: assigned.values[lab].tolist()
                                                 for lab in ss.LABELS},
                                     "ambiguity": assigned.ambiguity_fraction})
    if man is not None:
        worst = 0.0
        for lab in ss.LABELS:
            ref = subdomain_dirichlet_spectrum(man, sig, lab, args.first)
            got = assigned.values[lab][:ref.size]
            k = min(got.size, ref.size)
            if k < ref.size:
                worst = np.inf
            elif k:
                worst = max(worst, float(np.max(np.abs(got - ref) / ref)))
        rep.compare(f"first {args.first} values per piece vs oracles", worst, args.tol)
    return _emit(cfg, rep, "subspec")


def cmd_flux(cfg: PipelineConfig, args) -> int:
    from . import energy_flux as ef
    from . import subdomain_spectra as ss
    from .signals import band_limited

    man, sig, _, data = _load_or_forge(cfg, args.data, "dirichlet")
    if data.kind != "dirichlet":
        data = data.as_dirichlet()
    assigned = ss.assign_spectra(data, truncated=bool(cfg.trunc_J))
    rng = np.random.default_rng(cfg.seed)
    slots = ef.bounding_slots(data, args.region)
    table, worst = [], 0.0
    for k in range(args.count):
        F = band_limited(rng, slots, 0.0, args.duration, args.dt, args.omega)
        rec = ef.energy_flux(data, assigned, args.region, F, args.T)
        row = {"index": k, "flux": rec.flux, "roundtrip": rec.roundtrip}
        if man is not None and args.region in ("S1", "S2", "M\\S1", "M\\S2"):
            ref = ef.oracle_energy(man, sig, args.region, F, args.T, args.oracle_dt)
            row["oracle"] = ref
            worst = max(worst, abs(rec.flux - ref) / ref)
        table.append(row)
    rep = Report("flux", results={"region": args.region, "table": table})
    if man is not None:
        rep.compare("flux vs subdomain IBVP energy", worst, args.tol)
    return _emit(cfg, rep, "flux")


def cmd_green(cfg: PipelineConfig, args) -> int:
    from . import green_pipeline as gp
    from .transmission_oracle import SpaceTimeField, read_frame_stream, write_frame_stream

    cfg.out.mkdir(parents=True, exist_ok=True)
    if args.record:
        frames, dt, _ = read_frame_stream(args.record)
        meta = io.read_json(Path(args.record).with_suffix(".json"))
        S = len(meta["vertices"])
        rec = gp.GreenRecord(np.asarray(meta["vertices"]), frames.reshape(-1, S, S), dt,
                             meta["manifold_id"],
                             tuple(tuple(c) for c in meta["components"]),
                             np.asarray(meta["weights"]),
                             np.asarray(meta["coords"], dtype=float).reshape(S, -1))
        man = None
    else:
        cfg.require_test("simulating a Green record")
        man, sig, _, data = forge(cfg, "dirichlet")
        rec = gp.simulate_green(man, sig, args.T, args.dt)
        flat = rec.samples.reshape(rec.samples.shape[0], -1)
        write_frame_stream(cfg.out / "green_record.sgmf",
                           SpaceTimeField(flat, flat[:, :0], flat[:, :0], rec.dt, 0.0))
        io.write_json(cfg.out / "green_record.json",
                      {"vertices": rec.vertices, "manifold_id": rec.manifold_id,
                       "components": [list(c) for c in rec.components],
                       "weights": rec.weights, "coords": rec.coords})
    poles = gp.poles_and_residues(rec, n_max=args.n_max)
    rebuilt = gp.residues_to_spectral_data(poles, rec)
    io.write_json(cfg.out / "poles.json", poles.to_json())
    io.save_dataset(cfg.out / "dataset_green.json", rebuilt)
    rep = Report("green", results={"lambdas": poles.lambdas.tolist(),
                                   "ranks": poles.ranks.tolist()})
    if man is not None:
        ref_l, _ = gp.eigenspace_grams(data)
        k = poles.lambdas.size
        err = float(np.max(np.abs(poles.lambdas - ref_l[:k]) / np.maximum(ref_l[:k], 1.0)))
        rep.compare("eigenvalues vs discrete spectrum", err, args.tol)
    return _emit(cfg, rep, "green")


def verify_report(suite: str, checks) -> dict:
    return {"suite": suite, "checks": [c.to_json() for c in checks]}


def cmd_verify(cfg: PipelineConfig, args) -> int:
    cfg.require_test("verification against oracles")
    names = None if args.suite == "all" else args.suite.split(",")
    checks = acceptance.run_suite(names)
    cfg.out.mkdir(parents=True, exist_ok=True)
    io.write_json(cfg.out / "verify.json", verify_report(args.suite, checks))
    text = "".join(c.line() + "\n" for c in checks)
    (cfg.out / "verify.txt").write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return 0 if all(c.passed for c in checks) else 1


COMMANDS = {"forge": cmd_forge, "spectra": cmd_spectra, "distances": cmd_distances,
            "respond": cmd_respond, "nd": cmd_nd, "subspec": cmd_subspec, "flux": cmd_flux,
            "green": cmd_green, "verify": cmd_verify}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--geometry", choices=["cycle", "torus"], default="cycle")
    common.add_argument("--n", type=int, default=128, help="cycle vertices")
    common.add_argument("--nx", type=int, default=32)
    common.add_argument("--ny", type=int, default=32)
    common.add_argument("--metric-expr", default=None,
                        help="length density (cycle, variable s) or conformal factor "
                             "(torus, variables x, y in [0, 1))")
    common.add_argument("--sigma", default=None,
                        help="components separated by ';': vertex lists 'a,b', "
                             "'ring:cx,cy,r' or 'circle:x:index'")
    common.add_argument("--seeds", default=None, help="flood-fill seeds, ';'-separated")
    common.add_argument("--trunc-J", type=int, default=None)
    common.add_argument("--mode", choices=["test", "blind"], default="test")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", type=Path, default=Path("sigmaspec_out"))
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="sigmaspec", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("forge", parents=[common], help="synthesize spectral data on Sigma")
    s.add_argument("--kind", choices=["cauchy", "dirichlet"], default="cauchy")
    s = sub.add_parser("spectra", parents=[common], help="inspect or truncate a dataset")
    s.add_argument("--data")
    s.add_argument("--show", type=int, default=10)
    s = sub.add_parser("distances", parents=[common], help="distances on Sigma from heat traces")
    s.add_argument("--data")
    s.add_argument("--tol", type=float, default=0.03)
    s = sub.add_parser("respond", parents=[common], help="response operator at lambda")
    s.add_argument("--data")
    s.add_argument("--lam", type=float, default=-2.0)
    s.add_argument("--tol", type=float, default=0.05)
    s = sub.add_parser("nd", parents=[common], help="Neumann-to-Dirichlet map of one side")
    s.add_argument("--data")
    s.add_argument("--lam", type=float, default=-2.0)
    s.add_argument("--side", type=int, choices=[-1, 1], default=-1)
    s.add_argument("--tol", type=float, default=1e-6)
    s = sub.add_parser("subspec", parents=[common], help="Dirichlet spectra of the five pieces")
    s.add_argument("--data")
    s.add_argument("--n-max", type=int, default=None)
    s.add_argument("--first", type=int, default=5)
    s.add_argument("--tol", type=float, default=1e-8)
    s = sub.add_parser("flux", parents=[common], help="energy flux table for random sources")
    s.add_argument("--data")
    s.add_argument("--region", default="S1")
    s.add_argument("--count", type=int, default=3)
    s.add_argument("--duration", type=float, default=0.5)
    s.add_argument("--dt", type=float, default=2e-3)
    s.add_argument("--omega", type=float, default=40.0)
    s.add_argument("--T", type=float, default=1.0)
    s.add_argument("--oracle-dt", type=float, default=1e-4)
    s.add_argument("--tol", type=float, default=1e-2)
    s = sub.add_parser("green", parents=[common], help="Green record to spectral data")
    s.add_argument("--record", help="frame stream to analyse instead of simulating; "
                   "metadata is read from the .json file with the same stem")
    s.add_argument("--T", type=float, default=200.0)
    s.add_argument("--dt", type=float, default=0.02)
    s.add_argument("--n-max", type=int, default=10)
    s.add_argument("--tol", type=float, default=1e-3)
    s = sub.add_parser("verify", parents=[common], help="run the acceptance checks")
    s.add_argument("--suite", default="all",
                   help="'all' or a comma list of: " + ", ".join(acceptance.CHECKS))
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = PipelineConfig(args.geometry, args.n, args.nx, args.ny, args.metric_expr,
                             args.sigma, args.seeds, args.trunc_J, args.mode, args.seed, args.out)
        return COMMANDS[args.command](cfg, args)
    except (ConfigError, BlindModeError, ManifoldError, ValueError) as exc:
        sys.stderr.write(f"{args.command}: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
