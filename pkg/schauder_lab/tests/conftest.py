"""Pytest configuration for schauder_lab tests.

This module contains shared fixtures and configuration for all tests.
"""

import json
import os
from unittest.mock import patch

import pytest

from schauder_lab.heat.heat_kernel import GridSpec
from schauder_lab.noise.levy_noise import LevyMeasureSpec, TimeGrid
from schauder_lab.solution.fields import Coefficients, capped_power_field


@pytest.fixture
def mock_env():
    """Fixture to create a context manager for mocking environment variables."""

    def _mock_env(**kwargs):
        return patch.dict(os.environ, kwargs)

    return _mock_env


@pytest.fixture
def grid_1d():
    """Grid on [-3, 3] with spacing 0.02."""
    return GridSpec(dimension=1, half_width=3.01, nodes_per_axis=301)


@pytest.fixture
def grid_2d():
    return GridSpec(dimension=2, half_width=3.0, nodes_per_axis=61)


@pytest.fixture
def uniform_levy():
    """Uniform Lévy measure on [0.5, 1) with mass 2."""
    return LevyMeasureSpec(family="uniform", outer_radius=1.0, inner_cutoff=0.5, mass=2.0)


@pytest.fixture
def quarter_grid():
    return TimeGrid(horizon=1.0, steps=4)


@pytest.fixture
def capped_f():
    """Wiener-forced coefficients with f = min(x_+^0.5, 1)."""
    return Coefficients(f=capped_power_field(0.5, name="f"))


@pytest.fixture
def write_config(tmp_path):
    """Write a configuration dict to a JSON file and return its path."""

    def _write(data, name="config.json"):
        path = tmp_path / name
        path.write_text(json.dumps(data))
        return path

    return _write
