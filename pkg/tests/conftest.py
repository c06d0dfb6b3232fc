import numpy as np
import pytest

from wirtflow import BranchRecord, LoadRecord, build_grid, load_ieee69
from wirtflow.randgrid import random_radial_grid

RANDOM_SEEDS = range(50)


@pytest.fixture(scope="session")
def ieee69():
    return load_ieee69("open")


@pytest.fixture(scope="session")
def ieee69_meshed():
    return load_ieee69("closed")


@pytest.fixture(scope="session")
def ieee69_zip():
    return load_ieee69("open", variant="ieee69-zip")


@pytest.fixture
def two_bus():
    """Slack plus one node over z = 0.1j, consuming 0.1 + 0.05j."""
    return build_grid([BranchRecord(0, 1, 0.1j)], [LoadRecord(1, 0.1 + 0.05j, 0.0)])


@pytest.fixture(scope="session")
def random_cp_grids():
    return [random_radial_grid(s) for s in RANDOM_SEEDS]


@pytest.fixture(scope="session")
def random_zip_grids():
    return [random_radial_grid(s, exponents=(0.0, 1.0, 2.0)) for s in RANDOM_SEEDS]


def interior_states(grid, seed, count=3):
    """Random voltages near 1 pu, away from the solution."""
    rng = np.random.default_rng(1000 + seed)
    out = []
    for _ in range(count):
        mag = rng.uniform(0.85, 1.05, grid.n)
        ang = rng.uniform(-0.2, 0.1, grid.n)
        out.append(mag * np.exp(1j * ang))
    return out


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
