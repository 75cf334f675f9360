import numpy as np
import pytest

from gmigwave.gmig_field import FieldRealization, Grid


def random_source(grid: Grid, seed: int, radius: float, vector: bool = False, real: bool = False):
    """White complex values on the nodes of a ball; a deterministic test source."""
    rng = np.random.default_rng(seed)
    shape = grid.shape + ((grid.d,) if vector else ())
    vals = rng.normal(size=shape)
    if not real:
        vals = vals + 1j * rng.normal(size=shape)
    mask = grid.support_mask(radius)
    if vector:
        mask = mask[..., None]
    vals = np.where(mask, vals, 0)
    return FieldRealization(grid=grid, values=vals, seed=seed, delta=1.0, m=0.0)


@pytest.fixture
def make_source():
    return random_source


ACCEPTANCE_LINES = []


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running end-to-end test")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
