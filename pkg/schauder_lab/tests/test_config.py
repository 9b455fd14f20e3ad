"""
Tests for the configuration.config module.
"""

import json

import pytest

from schauder_lab.configuration.config import (
    DEFAULT_PATHS,
    EXPERIMENTS,
    default_config_path,
    load_config,
    load_config_file,
    serialize_config,
)
from schauder_lab.errors import ConfigParseError, ConfigValidationError
from schauder_lab.heat.heat_kernel import GridSpec


def test_minimal_config_uses_defaults():
    """A minimal isometry config loads with M = 1e5 paths and seed 0."""
    config = load_config('{"experiment": "isometry"}')
    assert config.paths == DEFAULT_PATHS == 100_000
    assert config.seed == 0
    assert config.grid_spec() == GridSpec(dimension=1, half_width=6.0, nodes_per_axis=601)
    assert config.levy_spec().total_mass == pytest.approx(2.0)


def test_negative_gamma_is_rejected_for_exponent():
    """alpha = 0.2 with p = 4 gives gamma = -0.3."""
    with pytest.raises(ConfigValidationError) as excinfo:
        load_config(json.dumps({"experiment": "exponent", "alpha": 0.2, "p": 4}))
    assert any("gamma = alpha + 2/p - 1 must be positive" in v for v in excinfo.value.violations)
    assert "-0.3" in str(excinfo.value)


def test_negative_gamma_is_allowed_for_isometry():
    config = load_config(json.dumps({"experiment": "isometry", "alpha": 0.2, "p": 4}))
    assert config.gamma == pytest.approx(-0.3)


def test_parse_error_carries_line_and_column():
    with pytest.raises(ConfigParseError) as excinfo:
        load_config('{\n  "experiment": "mild",\n  "seed": ,\n}')
    assert excinfo.value.line == 3
    assert excinfo.value.column > 0


def test_unknown_keys_are_rejected():
    with pytest.raises(ConfigValidationError, match="unknown configuration key"):
        load_config('{"experiment": "mild", "sigma": 3}')


def test_missing_experiment_is_rejected():
    with pytest.raises(ConfigValidationError, match="experiment is required"):
        load_config('{"seed": 1}')


def test_all_violations_are_collected():
    text = json.dumps({"experiment": "mild", "p": 1.5, "alpha": 1.5, "paths": 0, "seed": -1})
    with pytest.raises(ConfigValidationError) as excinfo:
        load_config(text)
    assert len(excinfo.value.violations) == 4


def test_invalid_sub_spec_is_reported():
    text = json.dumps({"experiment": "mild", "grid": {"dimension": 1, "half_width": 3.0, "nodes_per_axis": 100}})
    with pytest.raises(ConfigValidationError, match="grid: nodes_per_axis must be odd"):
        load_config(text)


NARROW_GRID = {"dimension": 1, "half_width": 3.01, "nodes_per_axis": 301}


def test_box_narrower_than_the_kernel_spread_is_rejected():
    """half_width 3.01 is below 6 sqrt(1) for the default horizon 1."""
    text = json.dumps({"experiment": "mild", "grid": NARROW_GRID})
    with pytest.raises(ConfigValidationError, match="grid half-width 3.01 must be at least 6"):
        load_config(text)


def test_box_check_uses_the_latest_time():
    short = {"horizon": 0.25, "steps": 4}
    config = load_config(json.dumps({"experiment": "mild", "grid": NARROW_GRID, "time_grid": short}))
    assert config.max_time() == 0.25
    text = json.dumps({"experiment": "mild", "grid": NARROW_GRID, "time_grid": short, "parameters": {"t": 1.0}})
    with pytest.raises(ConfigValidationError, match="for t = 1"):
        load_config(text)


def test_unknown_field_family_is_reported():
    text = json.dumps({"experiment": "mild", "coefficients": {"f": {"family": "spiral"}}})
    with pytest.raises(ConfigValidationError, match="coefficients: unknown field family"):
        load_config(text)


def test_serialize_round_trip():
    """load(serialize(config)) equals config field-wise."""
    config = load_config(
        json.dumps(
            {
                "experiment": "picard",
                "coefficients": {"f": {"family": "capped_power", "alpha": 0.6}},
                "p": 2.5,
                "alpha": 0.6,
                "beta": 0.3,
                "seed": 7,
                "parameters": {"window": 0.05},
            }
        )
    )
    assert load_config(serialize_config(config)) == config


def test_get_value():
    """Test get_value method."""
    config = load_config('{"experiment": "optimality", "parameters": {"delta": 0.8}}')

    assert config.get_value("delta", 0.7) == 0.8
    assert config.get_value("t", 1.0) == 1.0
    assert config.get_value("missing") is None


@pytest.mark.parametrize("experiment", EXPERIMENTS)
def test_shipped_configs_load(experiment):
    """Every experiment ships a valid default configuration."""
    config = load_config_file(default_config_path(experiment))
    assert config.experiment == experiment


def test_pathological_config_understates_the_drift():
    config = load_config_file(default_config_path("picard-pathological"))
    coeffs = config.build_coefficients()
    assert coeffs.has_drift
    assert coeffs.drift_norm == pytest.approx(0.02)


def test_load_config_file_not_found(tmp_path):
    """Test load_config_file when the file is missing."""
    with pytest.raises(FileNotFoundError):
        load_config_file(tmp_path / "missing.json")


def test_load_config_file_invalid_json(tmp_path):
    """Test load_config_file with invalid JSON."""
    path = tmp_path / "broken.json"
    path.write_text("invalid json")
    with pytest.raises(ConfigParseError):
        load_config_file(path)
