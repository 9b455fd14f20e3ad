#!/usr/bin/env python3
"""Command line entry point: ``schauder-lab <experiment> [options]``."""

import argparse
import json
import sys
from pathlib import Path
from typing import List, Optional

from schauder_lab.configuration.config import (
    EXPERIMENTS,
    ExperimentConfig,
    default_config_path,
    load_config,
    load_config_file,
)
from schauder_lab.errors import ConfigParseError, ConfigValidationError
from schauder_lab.experiments.runner import run
from schauder_lab.logging_config import attach_log_file, get_logger

logger = get_logger(__name__)

EXIT_CONFIG_ERROR = 2


def parse_arguments(argv: Optional[List[str]] = None) -> argparse.Namespace:
    """Parse command line arguments.

    Returns:
        argparse.Namespace: Parsed command line arguments
    """
    parser = argparse.ArgumentParser(
        prog="schauder-lab",
        description="Numerical experiments for gradient regularity of stochastic heat equations",
    )
    subparsers = parser.add_subparsers(dest="experiment", required=True, metavar="EXPERIMENT")
    for experiment in EXPERIMENTS:
        sub = subparsers.add_parser(experiment, help=f"run the {experiment} experiment")
        sub.add_argument("-c", "--config", type=Path, help="JSON configuration (default: config/<experiment>.json)")
        sub.add_argument("-s", "--seed", type=int, help="master seed override")
        sub.add_argument("-n", "--paths", type=int, help="number of Monte Carlo paths")
        sub.add_argument("-o", "--out", type=Path, help="output directory")
        sub.add_argument("--log-file", help="also write logs to this file")
        if experiment == "exponent":
            sub.add_argument("--exact", action="store_true", help="use the p = 2 isometry pathway")
    return parser.parse_args(argv)


def _with_overrides(config: ExperimentConfig, args: argparse.Namespace) -> ExperimentConfig:
    data = config.to_dict()
    if args.seed is not None:
        data["seed"] = args.seed
    if args.paths is not None:
        data["paths"] = args.paths
    if args.out is not None:
        data["output_dir"] = str(args.out)
    if getattr(args, "exact", False):
        data["p"] = 2.0
        data["parameters"] = {**data["parameters"], "exact": True}
    # overrides go through the same validation as the file
    return load_config(json.dumps(data))


def main(argv: Optional[List[str]] = None) -> int:
    """Load the configuration, run the experiment and return its exit status."""
    args = parse_arguments(argv)
    if args.log_file:
        attach_log_file(args.log_file)

    path = args.config or default_config_path(args.experiment)
    try:
        config = _with_overrides(load_config_file(path), args)
    except FileNotFoundError:
        return EXIT_CONFIG_ERROR
    except ConfigParseError as e:
        logger.error(f"{path}: {e}")
        return EXIT_CONFIG_ERROR
    except ConfigValidationError as e:
        for violation in e.violations:
            logger.error(f"{path}: {violation}")
        return EXIT_CONFIG_ERROR

    if config.experiment != args.experiment:
        logger.error(f"{path} configures '{config.experiment}', not '{args.experiment}'")
        return EXIT_CONFIG_ERROR

    return run(config).status


if __name__ == "__main__":
    sys.exit(main())
