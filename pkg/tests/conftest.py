import numpy as np
import pytest

from smlab.space import build_model_space
from smlab.spectral import build_operator, spectral_decompose


@pytest.fixture(scope="session")
def z32():
    return build_model_space("cycle", n=32)


@pytest.fixture(scope="session")
def z32_laplacian(z32):
    return spectral_decompose(build_operator("graph_laplacian", z32), z32)


@pytest.fixture(scope="session")
def z8():
    return build_model_space("cycle", n=8)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    if mod is None or not mod.LINES:
        return
    terminalreporter.section("acceptance criteria")
    for i in sorted(mod.LINES):
        terminalreporter.write_line(mod.LINES[i])
