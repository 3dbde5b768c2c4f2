import numpy as np
import pytest

from krflab.cp1 import CP1Geometry
from krflab.flow import random_potential

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def geom24():
    return CP1Geometry(24)


@pytest.fixture(scope="session")
def geom32():
    return CP1Geometry(32)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def small_potentials(g, n, c2=0.1, seed=0, lmin=1, lmax=6):
    """Smooth normalized potentials with the given C2proxy."""
    rng = np.random.default_rng(seed)
    return [random_potential(g, rng, c2, lmin, lmax) for _ in range(n)]


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
