"""Shared fixtures: a seeded RNG and small session-scoped grids/operators."""
import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from wedgelab.elliptic import EllipticOperator
from wedgelab.grid import WedgeGrid

settings.register_profile(
    "wedgelab",
    deadline=None,
    max_examples=25,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("wedgelab")


@pytest.fixture
def rng():
    return np.random.default_rng(7)


@pytest.fixture(scope="session")
def log_grid():
    return WedgeGrid.log(-6.0, 6.0, 65, 15)


@pytest.fixture(scope="session")
def lin_grid():
    return WedgeGrid.linear(0.25, 2.25, 65, 15)


@pytest.fixture(scope="session")
def op_small(log_grid):
    return EllipticOperator(log_grid)
