"""Experiment configuration: JSON files under ``config/``, one per experiment."""

import json
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Optional

from schauder_lab.errors import ConfigParseError, ConfigValidationError
from schauder_lab.heat.heat_kernel import HORIZON_MARGIN, GridSpec
from schauder_lab.logging_config import get_logger
from schauder_lab.noise.levy_noise import LevyMeasureSpec, TimeGrid
from schauder_lab.solution.fields import Coefficients

# Get configured logger for this module
logger = get_logger(__name__)

EXPERIMENTS = ("isometry", "mild", "gradient-moment", "picard", "exponent", "optimality")
GAMMA_EXPERIMENTS = ("exponent", "gradient-moment", "picard")
CONFIG_DIR = Path(__file__).resolve().parents[2] / "config"

DEFAULT_GRID = {"dimension": 1, "half_width": 6.0, "nodes_per_axis": 601}
DEFAULT_TIME_GRID = {"horizon": 1.0, "steps": 4, "grading": "uniform", "kappa": 2.0}
DEFAULT_LEVY = {"family": "uniform", "outer_radius": 1.0, "inner_cutoff": 0.5, "mass": 2.0}
DEFAULT_PATHS = 100_000


@dataclass
class ExperimentConfig:
    experiment: str
    grid: Dict[str, Any] = field(default_factory=lambda: dict(DEFAULT_GRID))
    time_grid: Dict[str, Any] = field(default_factory=lambda: dict(DEFAULT_TIME_GRID))
    coefficients: Dict[str, Any] = field(default_factory=dict)
    levy: Dict[str, Any] = field(default_factory=lambda: dict(DEFAULT_LEVY))
    p: float = 2.0
    alpha: float = 0.5
    beta: Optional[float] = None
    paths: int = DEFAULT_PATHS
    seed: int = 0
    output_dir: str = "output"
    parameters: Dict[str, Any] = field(default_factory=dict)

    @property
    def gamma(self) -> float:
        return self.alpha + 2.0 / self.p - 1.0

    def grid_spec(self) -> GridSpec:
        return GridSpec.from_dict(self.grid)

    def time_grid_spec(self) -> TimeGrid:
        return TimeGrid.from_dict(self.time_grid)

    def levy_spec(self) -> LevyMeasureSpec:
        return LevyMeasureSpec.from_dict(self.levy)

    def max_time(self) -> float:
        """Latest time the experiment evaluates: the time grid horizon or the ``t`` parameter."""
        t = self.parameters.get("t")
        horizon = self.time_grid_spec().horizon
        return horizon if t is None else max(horizon, float(t))

    def build_coefficients(self) -> Coefficients:
        return Coefficients.from_dict(self.coefficients, self.grid_spec().dimension, self.levy_spec())

    def get_value(self, key: str, default: Any = None) -> Optional[Any]:
        """Get an experiment-specific value from ``parameters``.

        Args:
            key: Name of the key to retrieve.
            default: Value to return if key is not found (defaults to None).

        Returns:
            The value associated with the key or the default value if not found.
        """
        try:
            return self.parameters[key]
        except KeyError:
            logger.debug(f"Key '{key}' not set for experiment '{self.experiment}', using {default!r}")
            return default

    def to_dict(self) -> Dict[str, Any]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _validate(config: ExperimentConfig) -> List[str]:
    violations = []
    if config.experiment not in EXPERIMENTS:
        violations.append(f"experiment must be one of {EXPERIMENTS}, got {config.experiment!r}")
    if not config.p >= 2:
        violations.append(f"p must be at least 2 (got {config.p:g})")
    if not 0 < config.alpha < 1:
        violations.append(f"alpha must lie in (0, 1) (got {config.alpha:g})")
    if config.experiment in GAMMA_EXPERIMENTS and config.p > 0 and not config.gamma > 0:
        violations.append(f"gamma = alpha + 2/p - 1 must be positive (got {config.gamma:g})")
    if config.beta is not None and not 0 < config.beta < config.gamma:
        violations.append(f"beta must satisfy 0 < beta < gamma = {config.gamma:g} (got {config.beta:g})")
    if config.paths < 1:
        violations.append(f"paths must be positive (got {config.paths})")
    if config.seed < 0:
        violations.append(f"seed must be nonnegative (got {config.seed})")
    for name, build in (("grid", config.grid_spec), ("time_grid", config.time_grid_spec), ("levy", config.levy_spec)):
        try:
            build()
        except (KeyError, TypeError, ValueError) as e:
            violations.append(f"{name}: {e}")
    if not violations:
        try:
            config.build_coefficients()
        except (KeyError, TypeError, ValueError) as e:
            violations.append(f"coefficients: {e}")
    if not violations:
        try:
            t_max = config.max_time()
        except (TypeError, ValueError) as e:
            violations.append(f"parameters.t: {e}")
        else:
            if not config.grid_spec().covers_horizon(t_max):
                violations.append(
                    f"grid half-width {config.grid_spec().half_width:g} must be at least "
                    f"{HORIZON_MARGIN:g} sqrt(t) = {HORIZON_MARGIN * math.sqrt(t_max):g} for t = {t_max:g}"
                )
    return violations


def load_config(text: str) -> ExperimentConfig:
    """Parse and validate a JSON configuration.

    Raises:
        ConfigParseError: The text is not valid JSON; carries line and column.
        ConfigValidationError: The configuration violates one or more invariants.
    """
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigParseError(e.msg, e.lineno, e.colno) from e
    if not isinstance(data, dict):
        raise ConfigValidationError(["configuration must be a JSON object"])
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigValidationError([f"unknown configuration key(s): {', '.join(unknown)}"])
    if "experiment" not in data:
        raise ConfigValidationError(["experiment is required"])
    try:
        config = ExperimentConfig(**data)
        config.p = float(config.p)
        config.alpha = float(config.alpha)
        config.beta = None if config.beta is None else float(config.beta)
        config.paths = int(config.paths)
        config.seed = int(config.seed)
    except (TypeError, ValueError) as e:
        raise ConfigValidationError([str(e)]) from e
    violations = _validate(config)
    if violations:
        for violation in violations:
            logger.error(f"Invalid configuration: {violation}")
        raise ConfigValidationError(violations)
    return config


def serialize_config(config: ExperimentConfig) -> str:
    """Canonical JSON; ``load_config(serialize_config(c)) == c``."""
    return json.dumps(config.to_dict(), indent=2, sort_keys=True)


def default_config_path(experiment: str) -> Path:
    return CONFIG_DIR / f"{experiment}.json"


def load_config_file(path: Path) -> ExperimentConfig:
    """Load the configuration from a JSON file.

    Raises:
        FileNotFoundError: If the config file doesn't exist.
        ConfigParseError: If the config file contains invalid JSON.
    """
    try:
        with open(path) as json_file:
            return load_config(json_file.read())
    except (FileNotFoundError, ConfigParseError) as e:
        logger.error(f"Failed to load config file: {e}")
        raise
