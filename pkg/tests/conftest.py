import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from mrlbm.mesh import CellTree, Grid

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_tree(grid: Grid, seed: int, p: float = 0.35) -> CellTree:
    """Refine each in-tree cell with probability ``p``, level by level."""
    rng = np.random.default_rng(seed)
    refined = []
    in_tree = np.ones(grid.shape(grid.min_level), bool)
    for j in range(grid.min_level, grid.max_level):
        r = in_tree & (rng.random(in_tree.shape) < p)
        refined.append(r)
        in_tree = np.kron(r, np.ones((2,) * grid.dim, bool)).astype(bool)
    return CellTree(grid, refined)


@st.composite
def trees(draw, dims=(1, 2, 3), max_depth=4):
    d = draw(st.sampled_from(dims))
    jm = draw(st.integers(0, 2 if d < 3 else 1))
    depth = draw(st.integers(1, max_depth if d < 3 else 3))
    grid = Grid(d, jm, jm + depth)
    seed = draw(st.integers(0, 2 ** 31))
    p = draw(st.floats(0.05, 0.8))
    return random_tree(grid, seed, p)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed after the run
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
