import json
import subprocess
import sys

import numpy as np
import pytest

from sigmaspec import io
from sigmaspec import subdomain_spectra as ss
from sigmaspec.cli import (BlindModeError, ConfigError, PipelineConfig, default_sigma,
                           eval_metric_expr, forge, main)


def test_dataset_round_trip_is_exact(cycle128, tmp_path):
    data = cycle128[3]
    path = tmp_path / "d.json"
    io.save_dataset(path, data)
    back = io.load_dataset(path)
    assert back.manifold_id == data.manifold_id and back.components == data.components
    assert np.array_equal(back.traces, data.traces)
    assert np.array_equal(back.normal_traces, data.normal_traces)
    assert np.array_equal(back.lambdas, data.lambdas)


def test_dumps_is_deterministic_and_handles_nonfinite():
    doc = {"b": [1.0, float("nan")], "a": np.float64(0.1), "c": np.arange(3)}
    assert io.dumps(doc) == io.dumps(dict(doc))
    back = json.loads(io.dumps(doc))
    assert back["b"][1] == "nan" and back["a"] == 0.1 and back["c"] == [0, 1, 2]


def test_unknown_format_version_is_rejected(cycle128):
    doc = io.dataset_to_json(cycle128[3])
    doc["version"] = "99"
    with pytest.raises(io.FormatError):
        io.dataset_from_json(doc)


def test_metric_expression_evaluator():
    s = np.linspace(0, 1, 5)
    assert np.allclose(eval_metric_expr("1 + 0.3*sin(2*pi*s)", {"s": s}),
                       1 + 0.3 * np.sin(2 * np.pi * s))
    for bad in ("__import__('os')", "s.real", "lambda: 1", "open('x')", "s ** 2"):
        with pytest.raises(ConfigError):
            eval_metric_expr(bad, {"s": s})


def test_default_sigma_avoids_resonant_arcs():
    for n in (64, 96, 128, 200):
        a, b = default_sigma(PipelineConfig(n=n)).split(";")
        b0, b1 = (int(v) for v in b.split(","))
        lengths = [int(a.split(",")[1]), b1 - b0]
        assert lengths[0] != lengths[1]


def test_blind_mode_refuses_oracles(tmp_path):
    cfg = PipelineConfig(mode="blind", out=tmp_path)
    with pytest.raises(BlindModeError):
        cfg.require_test("x")
    assert main(["green", "--mode", "blind", "--out", str(tmp_path)]) == 2
    assert main(["verify", "--mode", "blind", "--suite", "nd", "--out", str(tmp_path)]) == 2


def test_forge_then_subspec_matches_in_process(tmp_path):
    args = ["--n", "64", "--out", str(tmp_path)]
    assert main(["forge", "--kind", "dirichlet"] + args) == 0
    assert main(["subspec", "--mode", "blind", "--data", str(tmp_path / "dataset.json")]
                + args) == 0
    from_files = io.read_json(tmp_path / "subspec.json")["results"]["spectra"]
    _, _, _, data = forge(PipelineConfig(n=64), "dirichlet")
    direct = ss.assign_spectra(data)
    for lab in ss.LABELS:
        assert from_files[lab] == direct.values[lab].tolist()


def test_repeated_runs_write_identical_bytes(tmp_path):
    outs = []
    for k in range(2):
        out = tmp_path / str(k)
        assert main(["respond", "--n", "64", "--out", str(out)]) == 0
        outs.append((out / "respond.json").read_bytes())
    assert outs[0] == outs[1]


def test_verify_subset_reports_and_exit_code(tmp_path):
    rc = main(["verify", "--suite", "layers,green", "--out", str(tmp_path)])
    rep = io.read_json(tmp_path / "verify.json")
    assert [c["number"] for c in rep["checks"]] == [2, 10]
    assert rc == (0 if all(c["passed"] for c in rep["checks"]) else 1)


def test_module_entry_point_runs(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "sigmaspec", "forge", "--n", "32",
                           "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "dataset.json").exists()


def test_torus_sigma_parsing(tmp_path):
    assert main(["forge", "--geometry", "torus", "--nx", "16", "--ny", "16",
                 "--sigma", "ring:4,4,2;ring:11,11,3", "--out", str(tmp_path)]) == 0
    data = io.load_dataset(tmp_path / "dataset.json")
    assert len(data.components) == 2 and data.sigma_size == 12 + 20
