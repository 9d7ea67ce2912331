import numpy as np
import pytest

from asssolve.fem import build_fem_system


@pytest.fixture(scope="session")
def fem3():
    return build_fem_system(3)


@pytest.fixture(scope="session")
def fem4():
    return build_fem_system(4)


@pytest.fixture(scope="session")
def fem5():
    return build_fem_system(5)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def q1_mass_extremes(h: float) -> tuple[float, float]:
    """Exact extreme eigenvalues of the Q1 mass matrix.

    The matrix is the Kronecker square of the 1D P1 mass matrix
    (h/6) tridiag(1, 4, 1), whose eigenvalues are (h/6)(4 + 2 cos(j pi h)).
    """
    c = np.cos(np.pi * h)
    return (h / 6) ** 2 * (4 - 2 * c) ** 2, (h / 6) ** 2 * (4 + 2 * c) ** 2


# acceptance-criterion lines, filled by tests/test_acceptance.py
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
