import numpy as np
import pytest

from sigmaspec.manifold_forge import (build_manifold, carve_hypersurface, eigendecompose,
                                      emit_spectral_data)


@pytest.fixture(scope="session")
def cycle128():
    """Uniform cycle with two single-vertex Sigma components and Cauchy data."""
    man = build_manifold({"kind": "cycle", "n": 128})
    sig = carve_hypersurface(man, [[0], [50]], [25])
    basis = eigendecompose(man)
    return man, sig, basis, emit_spectral_data(basis, sig, "cauchy", man)


@pytest.fixture(scope="session")
def split_cycle():
    """Cycle of 96 cut by two arcs of different lengths (S1, S2 and M\\S all present)."""
    man = build_manifold({"kind": "cycle", "n": 96})
    sig = carve_hypersurface(man, [[0, 29], [52, 77]], [10, 60])
    basis = eigendecompose(man)
    return man, sig, basis, emit_spectral_data(basis, sig, "dirichlet", man)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
