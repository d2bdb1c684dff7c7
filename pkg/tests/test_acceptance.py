"""Acceptance criteria 1-11; each prints one PASS/FAIL line.

Criteria 1-10 run in-process.  Criterion 11 runs ``sigmaspec verify --suite
all`` in a fresh interpreter and compares its report bytes with the report
built from the in-process results of 1-10 (or from a second in-process suite
when those were deselected).
"""
from __future__ import annotations

import subprocess
import sys
import time

import pytest

from sigmaspec import acceptance, io
from sigmaspec.cli import verify_report

TIME_LIMIT = 60.0
_results: dict = {}
LINES: list = []  # shown in the terminal summary by conftest


def _run(name: str) -> acceptance.Check:
    t0 = time.perf_counter()
    check = acceptance.CHECKS[name]()
    elapsed = time.perf_counter() - t0
    _results[name] = check
    LINES.append(f"{check.line()} ({elapsed:.1f}s)")
    print("\n" + LINES[-1])
    assert elapsed < TIME_LIMIT, f"took {elapsed:.1f}s"
    assert check.passed, check.line()
    return check


def test_criterion_01_blago_consistency():
    _run("blago")


def test_criterion_02_layer_potential_algebra():
    _run("layers")


def test_criterion_03_anchored_j():
    _run("anchor")


def test_criterion_04_nd_recovery():
    _run("nd")


def test_criterion_05_varadhan_distances():
    _run("distances")


def test_criterion_06_subdomain_spectra():
    _run("subspec")


def test_criterion_07_extended_eigenfunctions():
    _run("extended")


def test_criterion_08_energy_flux():
    _run("flux")


def test_criterion_09_controllability_rank():
    _run("control")


def test_criterion_10_green_pipeline():
    _run("green")


def test_criterion_11_determinism(tmp_path):
    t0 = time.perf_counter()
    out = tmp_path / "run"
    proc = subprocess.run([sys.executable, "-m", "sigmaspec.cli", "verify", "--suite", "all",
                           "--out", str(out)], capture_output=True, text=True)
    assert proc.returncode in (0, 1), proc.stderr
    names = list(acceptance.CHECKS)
    if all(n in _results for n in names):
        checks = [_results[n] for n in names]
    else:
        checks = acceptance.run_suite()
    expected = io.dumps(verify_report("all", checks)).encode()
    got = (out / "verify.json").read_bytes()
    elapsed = time.perf_counter() - t0
    same = got == expected
    LINES.append(f"[{'PASS' if same else 'FAIL'}] 11 determinism: byte_identical={same} "
                 f"({len(got)} bytes) ({elapsed:.1f}s)")
    print("\n" + LINES[-1])
    assert same
    assert elapsed < TIME_LIMIT, f"took {elapsed:.1f}s"


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v", "-s"]))
