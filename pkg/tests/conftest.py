import numpy as np
import pytest

from roughdelay.fbm import FbmSpec, fbm_driver
from roughdelay.increments import Grid, GridPath

# one line per acceptance criterion, collected by test_acceptance.report
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def fbm_bundle():
    """H = 0.45 driver on [-1/4, 1] with mesh 1/256 and areas for v = 0, -1/4."""
    grid = Grid(-0.25, 1.0, 1 / 256)
    return fbm_driver(FbmSpec(0.45, 2, grid, seed=7), [0.25])


def random_path(rng, grid, shape=(2,)):
    return GridPath(grid, rng.normal(size=(grid.n_points,) + shape).cumsum(axis=0) * grid.mesh ** 0.5)
