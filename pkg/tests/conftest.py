import numpy as np
import pytest

from capshape.constellation import make_square_qam
from capshape.mi import NoiseModel, QuadratureSpec
from capshape.solver import solve_capacity


@pytest.fixture(scope="session")
def noise():
    return NoiseModel(1.0)


@pytest.fixture(scope="session")
def quad():
    return QuadratureSpec()


@pytest.fixture(scope="session")
def qam64():
    return make_square_qam(64, 20.0)


@pytest.fixture(scope="session")
def qam16():
    return make_square_qam(16, 10.0)


@pytest.fixture(scope="session")
def sol52(qam64, noise, quad):
    """Capacity-achieving PMF of 64-QAM (corner energy 20) at average energy 5.2."""
    return solve_capacity(qam64, noise, 5.2, quad)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
