"""Experiment orchestration: run a validated configuration and write its artifacts.

Every experiment writes its CSVs and ``summary.json`` under
``<output_dir>/<experiment>/``. The run status is 0 only when every check
passed; undetermined verdicts count as failures, and partial results are
still written when a check raises.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

import numpy as np
import pandas as pd

from schauder_lab.configuration.config import ExperimentConfig
from schauder_lab.errors import NonConvergenceError, SchauderLabError
from schauder_lab.experiments.reports import print_report, write_csv, write_summary
from schauder_lab.heat.heat_kernel import TRUNCATION_WIDTH
from schauder_lab.logging_config import get_logger
from schauder_lab.noise.levy_noise import TimeGrid, sample_noise_path
from schauder_lab.noise.stochastic_integrals import (
    StepIntegrandN,
    bound_report,
    check_moment_suite,
    default_suite,
    equality_report,
    poisson_p4_stability,
)
from schauder_lab.parallel import path_chunks
from schauder_lab.regularity.regularity import (
    OPTIMALITY_FIT_K_MIN,
    RegularityConfig,
    estimate_seminorm,
    optimality_experiment,
)
from schauder_lab.solution.drift_picard import estimate_window, solve_with_drift
from schauder_lab.solution.mild_solution import (
    PointGradient,
    compose,
    evaluate_mild,
    moment_bound_p2,
    sample_solutions,
    second_moment_p2,
)

logger = get_logger(__name__)

CHUNK_PATHS = 2000
STABILITY_SEEDS = 3


@dataclass
class RunResult:
    status: int
    artifacts: List[Path] = field(default_factory=list)
    summary: Dict[str, Any] = field(default_factory=dict)


class _Run:
    """Output directory, artifact list and summary shared by one experiment run."""

    def __init__(self, config: ExperimentConfig) -> None:
        self.config = config
        self.out = Path(config.output_dir) / config.experiment
        self.artifacts: List[Path] = []
        self.summary: Dict[str, Any] = {
            "experiment": config.experiment,
            "seed": config.seed,
            "paths": config.paths,
        }

    def table(self, name: str, frame: pd.DataFrame, title: Optional[str] = None) -> None:
        self.artifacts.append(write_csv(frame, self.out / f"{name}.csv"))
        print_report(title or name, frame)

    def check_declared(self) -> None:
        coeffs = self.config.build_coefficients()
        grid = self.config.grid_spec()
        violations = [v for f in coeffs.declared_fields() for v in f.check_declared(grid, seed=self.config.seed)]
        self.summary["declared_norm_violations"] = violations


# -- experiments -------------------------------------------------------------


def run_isometry(run: _Run) -> bool:
    config = run.config
    spec = config.levy_spec()
    reports = check_moment_suite(spec, config.paths, config.seed, horizon=config.time_grid_spec().horizon)
    run.table("isometry", pd.DataFrame([r.to_row() for r in reports]), "Moment identities")
    run.summary["checks"] = [
        {"kind": r.kind, "integrand": r.label, "pass": r.passed, "ratio": r.ratio, "constant": r.constant}
        for r in reports
    ]

    horizon = config.time_grid_spec().horizon
    unit = default_suite(spec)[1]["unit"]
    unit = StepIntegrandN(unit.time_breakpoints * horizon, unit.mark_cells, unit.values)
    seeds = [config.seed + i for i in range(STABILITY_SEEDS)]
    stability = poisson_p4_stability(unit, spec, config.paths, seeds)
    run.table("poisson_p4_stability", pd.DataFrame(stability.to_rows()), "Fourth-moment constant across seeds")
    run.summary["poisson_p4_stable"] = stability.stable
    return all(r.passed for r in reports) and stability.stable


def run_mild(run: _Run) -> bool:
    config = run.config
    grid, time_grid, spec = config.grid_spec(), config.time_grid_spec(), config.levy_spec()
    coeffs = config.build_coefficients()
    t = float(config.get_value("t", time_grid.horizon))
    run.check_declared()

    first = evaluate_mild(t, coeffs, sample_noise_path(time_grid, spec, config.seed, 0), grid, spec)
    run.table("mild_sample", first.to_frame(), "Mild solution, path 0")

    node = (grid.nodes_per_axis // 2,) * grid.dimension
    consistent = True
    squares = []
    for chunk in path_chunks(config.paths, CHUNK_PATHS):
        for sample in sample_solutions(t, coeffs, time_grid, grid, spec, config.seed, chunk):
            consistent &= bool(np.array_equal(compose(sample.terms), sample.u))
            squares.append(sample.u[node] ** 2)
    bound = bound_report("moment_bound_p2", np.asarray(squares), moment_bound_p2(t, coeffs, spec), config.seed)

    # finite differences are only trusted where the truncated stencils stay inside the box
    interior = grid.interior_mask(TRUNCATION_WIDTH * np.sqrt(t) + 2.0 * grid.spacing)
    tolerance = 10.0 * grid.spacing**2
    fd_error = 0.0
    if interior.any():
        for axis in range(grid.dimension):
            finite_difference = np.gradient(first.u, grid.spacing, axis=axis)
            fd_error = max(fd_error, float(np.max(np.abs(finite_difference - first.gradient[axis])[interior])))

    checks = pd.DataFrame(
        [
            {"check": "term_consistency", "value": 0.0 if consistent else 1.0, "tolerance": 0.0, "pass": consistent},
            {"check": "finite_differences", "value": fd_error, "tolerance": tolerance, "pass": fd_error <= tolerance},
            {"check": "moment_bound_p2", "value": bound.estimate, "tolerance": bound.target, "pass": bound.passed},
        ]
    )
    run.table("mild_checks", checks, "Mild solution checks")
    run.summary["moment_std_error"] = bound.std_error
    return bool(checks["pass"].all())


def _gradient_time_grid(config: ExperimentConfig, t: float) -> TimeGrid:
    base = config.time_grid_spec()
    return TimeGrid(
        horizon=t,
        steps=int(config.get_value("time_steps", 1000)),
        grading="graded",
        kappa=max(base.kappa, 2.0 / config.alpha),
    )


def run_gradient_moment(run: _Run) -> bool:
    config = run.config
    grid, spec = config.grid_spec(), config.levy_spec()
    coeffs = config.build_coefficients()
    t = float(config.get_value("t", 0.25))
    anchor = float(config.get_value("anchor", 0.0))
    offsets = [float(o) for o in config.get_value("offsets", [2.0**-4])]

    points = np.zeros((1 + len(offsets), grid.dimension))
    points[:, 0] = anchor + np.concatenate(([0.0], offsets))
    weights = PointGradient(t, points, coeffs, _gradient_time_grid(config, t), grid, spec)
    gradients = np.concatenate(
        [weights.sample(config.seed, chunk) for chunk in path_chunks(config.paths, CHUNK_PATHS)]
    )
    reports = []
    for i in range(1, points.shape[0]):
        squared = np.sum((gradients[:, i, :] - gradients[:, 0, :]) ** 2, axis=-1)
        target = second_moment_p2(t, points[i], points[0], coeffs, grid, spec)
        reports.append(equality_report("gradient_increment_p2", squared, target, config.seed, f"{offsets[i - 1]:g}"))
    run.table("gradient_moment", pd.DataFrame([r.to_row() for r in reports]), "Gradient increments vs isometry")

    times = [float(s) for s in config.get_value("times", [t / 4, t / 2, t])]
    values = [second_moment_p2(s, points[0], None, coeffs, grid, spec) for s in times]
    monotone = bool(np.all(np.diff(values) >= 0))
    run.table(
        "gradient_moment_in_time",
        pd.DataFrame({"t": times, "second_moment": values}),
        "E|grad u(t, x0)|^2 by isometry",
    )
    run.summary["nondecreasing_in_t"] = monotone
    return all(r.passed for r in reports) and monotone


def run_picard(run: _Run) -> bool:
    config = run.config
    grid, time_grid, spec = config.grid_spec(), config.time_grid_spec(), config.levy_spec()
    coeffs = config.build_coefficients()
    tol = float(config.get_value("tolerance", 1e-4))
    run.check_declared()
    path = sample_noise_path(time_grid, spec, config.seed, int(config.get_value("path_index", 0)))

    try:
        estimate = estimate_window(
            coeffs,
            path,
            grid,
            spec,
            initial_window=float(config.get_value("window", 0.05)),
            p=config.p,
            alpha=config.alpha,
            beta=config.beta,
        )
        run.summary["window"] = estimate.window
        run.summary["trials"] = list(estimate.trials)
        solution = solve_with_drift(coeffs, time_grid.horizon, path, grid, spec, tol=tol, window=estimate.window)
    except NonConvergenceError as e:
        run.table("picard_log", pd.DataFrame(e.ratio_history), "Ratio history before divergence")
        raise

    run.table("picard_log", solution.log_frame(), "Picard convergence log")
    residuals = [w.residual for w in solution.windows]
    run.summary["windows"] = [
        {"start": w.start, "end": w.end, "steps": w.steps, "iterates": w.iterates, "residual": w.residual}
        for w in solution.windows
    ]
    passed = all(r < tol for r in residuals)

    if not coeffs.has_drift:
        direct = evaluate_mild(time_grid.horizon, coeffs, path, grid, spec)
        difference = float(np.max(np.abs(solution.u[-1] - direct.u)))
        run.summary["drift_free_difference"] = difference
        passed = passed and difference <= 1e-12
    return passed


def run_exponent(run: _Run) -> bool:
    config = run.config
    grid, time_grid, spec = config.grid_spec(), config.time_grid_spec(), config.levy_spec()
    coeffs = config.build_coefficients()
    run.check_declared()
    regularity = RegularityConfig(
        p=config.p,
        alpha=config.alpha,
        beta=config.beta,
        t=float(config.get_value("t", 0.25)),
        anchor=float(config.get_value("anchor", 0.0)),
        k_min=int(config.get_value("k_min", 3)),
        k_max=int(config.get_value("k_max", 10)),
        paths=config.paths,
        seed=config.seed,
        fit_tolerance=float(config.get_value("fit_tolerance", 0.05)),
        exact=bool(config.get_value("exact", True)),
        time_steps=int(config.get_value("time_steps", 1000)),
        kappa=time_grid.kappa,
    )
    report = estimate_seminorm(regularity, coeffs, grid, spec, time_grid=time_grid)
    run.table("exponent", report.to_frame(), "Increment moments")
    run.summary.update(report.summary())
    return report.passed is True


def run_optimality(run: _Run) -> bool:
    config = run.config
    k_range = range(int(config.get_value("k_min", 1)), int(config.get_value("k_max", 9)) + 1)
    result = optimality_experiment(
        config.alpha,
        float(config.get_value("delta", 0.7)),
        float(config.get_value("t", 1.0)),
        config.grid_spec(),
        tuple(k_range),
        spec=config.levy_spec(),
        fit_k_min=int(config.get_value("fit_k_min", OPTIMALITY_FIT_K_MIN)),
    )
    run.table("optimality", result.table, "Optimality ratios")
    summary = result.summary(float(config.get_value("fit_tolerance", 0.05)))
    run.summary.update(summary)
    return summary["pass"]


EXPERIMENT_RUNNERS: Dict[str, Callable[[_Run], bool]] = {
    "isometry": run_isometry,
    "mild": run_mild,
    "gradient-moment": run_gradient_moment,
    "picard": run_picard,
    "exponent": run_exponent,
    "optimality": run_optimality,
}


def run(config: ExperimentConfig) -> RunResult:
    """Run the configured experiment; status 0 iff every check passed."""
    current = _Run(config)
    logger.info(f"Running {config.experiment} (seed {config.seed}, {config.paths} paths)")
    passed = False
    try:
        passed = EXPERIMENT_RUNNERS[config.experiment](current)
    except SchauderLabError as e:
        logger.exception(f"Experiment {config.experiment} failed: {e}")
        current.summary["error"] = f"{type(e).__name__}: {e}"
    finally:
        current.summary["pass"] = bool(passed)
        current.artifacts.append(write_summary(current.summary, current.out / "summary.json"))
    status = 0 if passed is True else 1
    if status:
        logger.error(f"Experiment {config.experiment} did not pass; see {current.out}")
    else:
        logger.info(f"Experiment {config.experiment} passed")
    return RunResult(status=status, artifacts=current.artifacts, summary=current.summary)
