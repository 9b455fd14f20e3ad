"""Itô and compensated-Poisson integrals of step integrands, and their moment checks.

A moment check samples paths, integrates each one, and compares the Monte
Carlo moment with its closed-form target (isometries) or bound (fourth
moments). A failed check is a report outcome, not an exception.
"""

import itertools
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.typing import NDArray

from schauder_lab.errors import AlignmentError, MarkSupportError, PreconditionError
from schauder_lab.logging_config import get_logger
from schauder_lab.noise.levy_noise import (
    JumpEvents,
    LevyMeasureSpec,
    NoisePath,
    TimeGrid,
    compensator_integral,
    sample_jumps,
    wiener_matrix,
)
from schauder_lab.parallel import ordered_map, path_chunks

logger = get_logger(__name__)

MIN_PATHS = 10_000
CHUNK_PATHS = 10_000
STD_ERRORS = 3.0
# Seeds agree when their ratios differ by at most this many combined standard errors.
STABILITY_STD_ERRORS = 4.0
# E M^4 <= 6 (int F^2)^2 for Brownian step integrands.
ITO_P4_CONSTANT = 6.0

MOMENT_KINDS = (
    "ito_isometry",
    "ito_p4_bound",
    "poisson_isometry",
    "poisson_p4_bound",
    "poisson_mean",
)


def _check_breakpoints(breakpoints: NDArray[np.float64]) -> None:
    if breakpoints.ndim != 1 or breakpoints.size < 2:
        raise ValueError("a step integrand needs at least two breakpoints")
    if breakpoints[0] != 0.0 or np.any(np.diff(breakpoints) <= 0):
        raise ValueError("breakpoints must start at 0 and increase strictly")


@dataclass(frozen=True, eq=False)
class StepIntegrandW:
    """``F(r) = F_j`` on ``(t_{j-1}, t_j]``."""

    breakpoints: NDArray[np.float64]
    values: NDArray[np.float64]

    def __post_init__(self) -> None:
        object.__setattr__(self, "breakpoints", np.asarray(self.breakpoints, dtype=float))
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        _check_breakpoints(self.breakpoints)
        if self.values.shape != (self.breakpoints.size - 1,):
            raise ValueError("one value per time cell is required")

    @property
    def horizon(self) -> float:
        return float(self.breakpoints[-1])

    def squared_norm(self) -> float:
        """``int_0^t F(r)^2 dr``."""
        return float(np.dot(self.values**2, np.diff(self.breakpoints)))

    def combine(self, a: float, other: "StepIntegrandW", b: float) -> "StepIntegrandW":
        """``a * self + b * other`` on the common breakpoints."""
        if not np.array_equal(self.breakpoints, other.breakpoints):
            raise AlignmentError("step integrands must share breakpoints to be combined")
        return StepIntegrandW(self.breakpoints, a * self.values + b * other.values)


@dataclass(frozen=True, eq=False)
class StepIntegrandN:
    """``H(r, v) = H_ij`` on ``(t_{i-1}, t_i] x E_j`` and zero off the mark cells."""

    time_breakpoints: NDArray[np.float64]
    mark_cells: Tuple[Tuple[float, float], ...]
    values: NDArray[np.float64]

    def __post_init__(self) -> None:
        object.__setattr__(self, "time_breakpoints", np.asarray(self.time_breakpoints, dtype=float))
        object.__setattr__(self, "values", np.atleast_2d(np.asarray(self.values, dtype=float)))
        object.__setattr__(
            self, "mark_cells", tuple((float(lo), float(hi)) for lo, hi in self.mark_cells)
        )
        _check_breakpoints(self.time_breakpoints)
        if self.values.shape != (self.time_breakpoints.size - 1, len(self.mark_cells)):
            raise ValueError("values must have one row per time cell and one column per mark cell")
        ordered = sorted(self.mark_cells)
        for lo, hi in ordered:
            if not lo < hi:
                raise MarkSupportError(f"mark cell [{lo}, {hi}) is empty")
        for (_, hi), (lo, _) in zip(ordered, ordered[1:]):
            if lo < hi:
                raise MarkSupportError("mark cells must be pairwise disjoint")

    @property
    def horizon(self) -> float:
        return float(self.time_breakpoints[-1])

    def check_support(self, spec: LevyMeasureSpec) -> None:
        for lo, hi in self.mark_cells:
            if lo < spec.inner_cutoff or hi > spec.outer_radius:
                raise MarkSupportError(
                    f"mark cell [{lo}, {hi}) leaves the support [{spec.inner_cutoff}, {spec.outer_radius})"
                )

    def norm(self, spec: LevyMeasureSpec, power: int) -> float:
        """``int int |H|^power nu(dv) dr``."""
        return compensator_integral(
            StepIntegrandN(self.time_breakpoints, self.mark_cells, np.abs(self.values) ** power),
            spec,
            self.horizon,
        )

    def lookup(self, times: NDArray[np.float64], marks: NDArray[np.float64]) -> NDArray[np.float64]:
        """``H`` at each (time, mark) pair; zero outside the cells."""
        cell_t = np.searchsorted(self.time_breakpoints, times, side="left") - 1
        in_time = (cell_t >= 0) & (cell_t < self.values.shape[0]) & (times > 0)
        lows = np.array([lo for lo, _ in self.mark_cells])
        highs = np.array([hi for _, hi in self.mark_cells])
        order = np.argsort(lows)
        slot = np.searchsorted(lows[order], marks, side="right") - 1
        slot_ok = slot >= 0
        cell_v = order[np.where(slot_ok, slot, 0)]
        in_mark = slot_ok & (marks < highs[cell_v])
        hit = in_time & in_mark
        out = np.zeros(times.shape)
        out[hit] = self.values[cell_t[hit], cell_v[hit]]
        return out


def _cell_indices(F_breakpoints: NDArray[np.float64], grid: TimeGrid) -> NDArray[np.int64]:
    if F_breakpoints[-1] > grid.horizon * (1 + 1e-12):
        raise AlignmentError("integrand extends beyond the path horizon")
    try:
        return grid.indices_of(F_breakpoints)
    except AlignmentError as exc:
        raise AlignmentError(f"step breakpoints do not align with the time grid: {exc}") from exc


def ito_integral(F: StepIntegrandW, path: NoisePath) -> float:
    """``sum_j F_j (W(t_j) - W(t_{j-1}))``."""
    idx = _cell_indices(F.breakpoints, path.time_grid)
    W = path.wiener_path
    return float(np.dot(F.values, W[idx[1:]] - W[idx[:-1]]))


def ito_integrals(F: StepIntegrandW, increments: NDArray[np.float64], grid: TimeGrid) -> NDArray[np.float64]:
    """``ito_integral`` for every row of a (paths x steps) increment matrix."""
    idx = _cell_indices(F.breakpoints, grid)
    W = np.concatenate((np.zeros((increments.shape[0], 1)), np.cumsum(increments, axis=1)), axis=1)
    return (W[:, idx[1:]] - W[:, idx[:-1]]) @ F.values


def poisson_integral(H: StepIntegrandN, path: NoisePath, spec: LevyMeasureSpec) -> float:
    """Jump sum of ``H`` over the path minus its compensator."""
    _cell_indices(H.time_breakpoints, path.time_grid)
    H.check_support(spec)
    jumps = path.jumps
    charged = H.lookup(jumps.times, jumps.marks).sum()
    return float(charged - compensator_integral(H, spec, H.horizon))


def poisson_integrals(
    H: StepIntegrandN, jumps: Sequence[JumpEvents], spec: LevyMeasureSpec
) -> NDArray[np.float64]:
    """``poisson_integral`` for a sequence of per-path jump lists, in order."""
    H.check_support(spec)
    counts = np.array([len(j) for j in jumps], dtype=np.int64)
    path_ids = np.repeat(np.arange(len(jumps)), counts)
    times = np.concatenate([j.times for j in jumps]) if len(jumps) else np.empty(0)
    marks = np.concatenate([j.marks for j in jumps]) if len(jumps) else np.empty(0)
    charged = np.bincount(path_ids, weights=H.lookup(times, marks), minlength=len(jumps))
    return charged - compensator_integral(H, spec, H.horizon)


@dataclass(frozen=True)
class MomentReport:
    kind: str
    target: float
    estimate: float
    std_error: float
    paths: int
    seed: int
    passed: bool
    label: str = ""
    ratio: Optional[float] = None
    constant: Optional[float] = None

    def to_row(self) -> Dict[str, object]:
        return {
            "kind": self.kind,
            "target": self.target,
            "estimate": self.estimate,
            "std_error": self.std_error,
            "paths": self.paths,
            "seed": self.seed,
            "pass": self.passed,
        }


def _mean_and_error(samples: NDArray[np.float64]) -> Tuple[float, float]:
    estimate = float(np.mean(samples))
    std_error = float(np.std(samples, ddof=1) / np.sqrt(samples.size))
    return estimate, std_error


def equality_report(kind, samples, target, seed, label="") -> MomentReport:
    estimate, std_error = _mean_and_error(samples)
    passed = abs(estimate - target) <= STD_ERRORS * std_error
    return MomentReport(kind, float(target), estimate, std_error, samples.size, seed, bool(passed), label)


def bound_report(kind, samples, bound, seed, label="", ratio_base=None, constant=None) -> MomentReport:
    estimate, std_error = _mean_and_error(samples)
    relative = std_error / estimate if estimate > 0 else 0.0
    passed = estimate <= bound * (1.0 + STD_ERRORS * relative)
    ratio = estimate / ratio_base if ratio_base else None
    return MomentReport(
        kind, float(bound), estimate, std_error, samples.size, seed, bool(passed), label, ratio, constant
    )


def poisson_p4_constant(H: StepIntegrandN, spec: LevyMeasureSpec) -> float:
    """Constant ``C`` with ``E I^4 <= C int int H^4 nu dr`` for ``H`` supported on ``[rho, c)``.

    ``E I^4 = int int H^4 + 3 (int int H^2)^2`` and, by Hölder on a support of
    mass ``Lambda t``, ``(int int H^2)^2 <= Lambda t int int H^4``.
    """
    return 1.0 + 3.0 * spec.total_mass * H.horizon


@dataclass(frozen=True)
class ConstantStability:
    """Empirical ``E I^4 / int int H^4 nu dr`` for several seeds against the recorded constant."""

    constant: float
    seeds: Tuple[int, ...]
    ratios: Tuple[float, ...]
    std_errors: Tuple[float, ...]
    stable: bool

    def to_rows(self) -> List[Dict[str, object]]:
        return [
            {"seed": seed, "ratio": ratio, "std_error": error, "constant": self.constant}
            for seed, ratio, error in zip(self.seeds, self.ratios, self.std_errors)
        ]


def poisson_p4_stability(
    H: StepIntegrandN, spec: LevyMeasureSpec, paths: int, seeds: Sequence[int]
) -> ConstantStability:
    """Record the fourth-moment ratio per seed and check that it does not move with the seed.

    Stable means every pair of seeds agrees within ``STABILITY_STD_ERRORS``
    combined standard errors and no ratio exceeds the constant by more than
    that margin.
    """
    if len(seeds) < 2:
        raise PreconditionError("a stability check needs at least two seeds")
    if paths < MIN_PATHS:
        raise PreconditionError(f"moment checks need at least {MIN_PATHS} paths, got {paths}")
    norm4 = H.norm(spec, 4)
    ratios, errors = [], []
    for seed in seeds:
        values = poisson_integrals(H, _jump_lists(H.horizon, spec, paths, seed), spec)
        estimate, std_error = _mean_and_error(values**4)
        ratios.append(estimate / norm4)
        errors.append(std_error / norm4)
    constant = poisson_p4_constant(H, spec)
    agree = all(
        abs(ratios[i] - ratios[j]) <= STABILITY_STD_ERRORS * math.hypot(errors[i], errors[j])
        for i, j in itertools.combinations(range(len(seeds)), 2)
    )
    bounded = all(r <= constant + STABILITY_STD_ERRORS * e for r, e in zip(ratios, errors))
    logger.info(f"Fourth-moment ratios {[round(r, 4) for r in ratios]} against constant {constant:g}")
    return ConstantStability(constant, tuple(seeds), tuple(ratios), tuple(errors), bool(agree and bounded))


def _ito_samples(F: StepIntegrandW, grid: TimeGrid, paths: int, seed: int) -> NDArray[np.float64]:
    chunks = path_chunks(paths, CHUNK_PATHS)
    return np.concatenate([ito_integrals(F, wiener_matrix(grid, seed, c), grid) for c in chunks])


def _jump_lists(horizon: float, spec: LevyMeasureSpec, paths: int, seed: int) -> List[JumpEvents]:
    return ordered_map(lambda index: sample_jumps(horizon, spec, (seed, index)), range(paths))


def report_from_ito_samples(kind: str, F: StepIntegrandW, values, seed: int, label="") -> MomentReport:
    norm = F.squared_norm()
    if kind == "ito_isometry":
        return equality_report(kind, values**2, norm, seed, label)
    if kind == "ito_p4_bound":
        return bound_report(kind, values**4, ITO_P4_CONSTANT * norm**2, seed, label, ratio_base=norm**2)
    raise ValueError(f"{kind!r} is not a Brownian moment check")


def report_from_poisson_samples(
    kind: str, H: StepIntegrandN, spec: LevyMeasureSpec, values, seed: int, label=""
) -> MomentReport:
    if kind == "poisson_isometry":
        return equality_report(kind, values**2, H.norm(spec, 2), seed, label)
    if kind == "poisson_mean":
        return equality_report(kind, values, 0.0, seed, label)
    if kind == "poisson_p4_bound":
        norm4 = H.norm(spec, 4)
        constant = poisson_p4_constant(H, spec)
        return bound_report(
            kind, values**4, constant * norm4, seed, label, ratio_base=norm4, constant=constant
        )
    raise ValueError(f"{kind!r} is not a Poisson moment check")


def check_moment_identity(
    kind: str,
    integrand: Union[StepIntegrandW, StepIntegrandN],
    spec: Optional[LevyMeasureSpec],
    paths: int,
    seed: int,
    time_grid: Optional[TimeGrid] = None,
) -> MomentReport:
    """Monte Carlo check of an isometry or fourth-moment bound.

    ``time_grid`` defaults to the grid whose nodes are the integrand's
    breakpoints.
    """
    if kind not in MOMENT_KINDS:
        raise ValueError(f"unknown moment check {kind!r}; expected one of {MOMENT_KINDS}")
    if paths < MIN_PATHS:
        raise PreconditionError(f"moment checks need at least {MIN_PATHS} paths, got {paths}")
    if time_grid is None:
        breaks = getattr(integrand, "breakpoints", getattr(integrand, "time_breakpoints", None))
        time_grid = TimeGrid.from_breakpoints(breaks)
    logger.info(f"Checking {kind} over {paths} paths (seed {seed})")
    if kind.startswith("ito"):
        values = _ito_samples(integrand, time_grid, paths, seed)
        return report_from_ito_samples(kind, integrand, values, seed)
    if spec is None:
        raise PreconditionError("Poisson moment checks need a Lévy measure")
    _cell_indices(integrand.time_breakpoints, time_grid)
    jumps = _jump_lists(time_grid.horizon, spec, paths, seed)
    values = poisson_integrals(integrand, jumps, spec)
    return report_from_poisson_samples(kind, integrand, spec, values, seed)


def default_suite(spec: LevyMeasureSpec) -> Tuple[Dict[str, StepIntegrandW], Dict[str, StepIntegrandN]]:
    """Step integrands on quarters of (0, 1] used by the isometry experiment."""
    quarters = np.linspace(0.0, 1.0, 5)
    rho, c = spec.inner_cutoff, spec.outer_radius
    middle = 0.5 * (rho + c)
    full = ((rho, c),)
    split = ((rho, middle), (middle, c))
    brownian = {
        "unit": StepIntegrandW(quarters, [1.0, 1.0, 1.0, 1.0]),
        "half_then_double": StepIntegrandW(quarters, [1.0, 1.0, 2.0, 2.0]),
        "alternating": StepIntegrandW(quarters, [0.5, -1.0, 2.0, 0.25]),
        "late_start": StepIntegrandW(quarters, [0.0, 0.0, 3.0, 3.0]),
        "early_stop": StepIntegrandW(quarters, [1.0, 1.0, 1.0, 0.0]),
    }
    poisson = {
        "unit": StepIntegrandN(quarters, full, np.ones((4, 1))),
        "two_marks": StepIntegrandN(quarters, split, np.tile([1.0, -2.0], (4, 1))),
        "time_varying": StepIntegrandN(quarters, full, [[1.0], [1.0], [3.0], [3.0]]),
        "inner_cell": StepIntegrandN(quarters, ((rho + 0.1 * (c - rho), rho + 0.8 * (c - rho)),), 2.0 * np.ones((4, 1))),
        "table": StepIntegrandN(quarters, split, [[1.0, 0.5], [-1.0, 2.0], [0.0, 1.0], [2.0, -0.5]]),
    }
    return brownian, poisson


def check_moment_suite(
    spec: LevyMeasureSpec, paths: int, seed: int, horizon: float = 1.0
) -> List[MomentReport]:
    """Run the default suite on one shared set of paths."""
    brownian, poisson = default_suite(spec)
    scale = horizon
    grid = TimeGrid(horizon=scale, steps=4)
    brownian = {k: StepIntegrandW(F.breakpoints * scale, F.values) for k, F in brownian.items()}
    poisson = {
        k: StepIntegrandN(H.time_breakpoints * scale, H.mark_cells, H.values) for k, H in poisson.items()
    }
    reports: List[MomentReport] = []

    chunks = path_chunks(paths, CHUNK_PATHS)
    increments = [wiener_matrix(grid, seed, c) for c in chunks]
    for label, F in brownian.items():
        values = np.concatenate([ito_integrals(F, block, grid) for block in increments])
        reports.append(report_from_ito_samples("ito_isometry", F, values, seed, label))
        if label == "unit":
            reports.append(report_from_ito_samples("ito_p4_bound", F, values, seed, label))

    jumps = _jump_lists(grid.horizon, spec, paths, seed)
    for label, H in poisson.items():
        values = poisson_integrals(H, jumps, spec)
        reports.append(report_from_poisson_samples("poisson_isometry", H, spec, values, seed, label))
        reports.append(report_from_poisson_samples("poisson_mean", H, spec, values, seed, label))
        if label == "unit":
            reports.append(report_from_poisson_samples("poisson_p4_bound", H, spec, values, seed, label))

    for report in reports:
        logger.debug(f"{report.kind}[{report.label}]: estimate {report.estimate:.6g} target {report.target:.6g}")
    return reports
