import numpy as np
import pytest

from stratfib import Polynomial, PolyMap, Stratification, Stratum

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


def var(n, j):
    return Polynomial.variable(n, j)


@pytest.fixture(scope="session")
def broughton():
    x, y = var(2, 0), var(2, 1)
    return PolyMap([x + x * x * y])


@pytest.fixture(scope="session")
def linear():
    return PolyMap([var(2, 0)])


@pytest.fixture(scope="session")
def plane():
    return Stratification.trivial(2)


def make_cross():
    x, y = var(2, 0), var(2, 1)
    strata = [
        Stratum("O", 2, (x, y)),
        Stratum("px", 2, (y,), (x,)),
        Stratum("nx", 2, (y,), (-x,)),
        Stratum("py", 2, (x,), (y,)),
        Stratum("ny", 2, (x,), (-y,)),
    ]
    return Stratification(2, tuple(strata), tuple(("O", s.id) for s in strata[1:]))


@pytest.fixture(scope="session")
def cross():
    return make_cross()


@pytest.fixture(scope="session")
def punctured_plane():
    x, y = var(2, 0), var(2, 1)
    return Stratification(
        2,
        (Stratum("O", 2, (x, y)), Stratum("A", 2, (), (Polynomial.norm_squared(2),))),
        (("O", "A"),),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
