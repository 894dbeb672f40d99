"""Shared fixtures for the polystab test suite."""

import os

import pytest
from hypothesis import settings

from polystab.core.config_manager import get_config_manager
from polystab.destabilizer import SolverOptions
from polystab.geometry import parse_polytope
from polystab.resources import example_path

settings.register_profile("ci", max_examples=50, deadline=None)
settings.register_profile("fast", max_examples=8, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "fast"))


@pytest.fixture(autouse=True)
def default_config():
    """Every test starts from the built-in configuration."""
    manager = get_config_manager()
    manager.reset()
    yield manager
    manager.reset()


@pytest.fixture
def bundled():
    """Load a bundled example document by name."""
    def load(name):
        return parse_polytope(example_path(name))
    return load


@pytest.fixture
def p1(bundled):
    return bundled("p1")


@pytest.fixture
def square(bundled):
    return bundled("square")


@pytest.fixture
def trapezium(bundled):
    return bundled("trapezium_l2")


@pytest.fixture
def triangle():
    return parse_polytope({
        "dim": 2,
        "facets": [
            {"normal": [1, 0], "offset": 0},
            {"normal": [0, 1], "offset": 0},
            {"normal": [-1, -1], "offset": -1},
        ],
    })


@pytest.fixture
def fast_opts():
    """Solver options with a small certificate battery."""
    return SolverOptions.from_config(battery_size=20, seed=7)
