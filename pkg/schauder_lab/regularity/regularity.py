"""Hölder regularity of the gradient: increment moments, log-log fits, optimality tables."""

import math
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from numpy.typing import NDArray
from scipy import stats

from schauder_lab.errors import FitError, MisuseError, PreconditionError, ResolutionError
from schauder_lab.heat.heat_kernel import GridSpec
from schauder_lab.logging_config import get_logger
from schauder_lab.noise.levy_noise import LevyMeasureSpec, TimeGrid, sample_noise_path
from schauder_lab.parallel import ordered_map, path_chunks
from schauder_lab.solution.drift_picard import solve_with_drift
from schauder_lab.solution.fields import Coefficients, JumpCoefficient, MarkProfile, capped_power_field
from schauder_lab.solution.mild_solution import PointGradient, second_moment_p2

logger = get_logger(__name__)

MIN_FIT_ROWS = 4
MIN_RESOLVED_SPACINGS = 2
FIT_WINDOW_SPACINGS = 4
# Monte Carlo verdicts are withheld above this slope standard error.
MAX_SLOPE_STD_ERROR = 0.1
CHUNK_PATHS = 2000
EPSILON_FRACTIONS = (0.125, 0.25, 0.5)
OPTIMALITY_BAND = 4.0
# Rows with x = 2^-k above this scale still feel the cap of f at 1 and bend the fitted slope.
OPTIMALITY_FIT_K_MIN = 5


def predicted_gamma(alpha: float, p: float) -> float:
    return alpha + 2.0 / p - 1.0


@dataclass(frozen=True)
class RegularityConfig:
    p: float
    alpha: float
    beta: Optional[float] = None
    t: float = 0.25
    anchor: float = 0.0
    k_min: int = 3
    k_max: int = 10
    paths: int = 20_000
    seed: int = 0
    fit_tolerance: float = 0.05
    exact: bool = True
    time_steps: int = 1000
    kappa: float = 2.0

    def __post_init__(self) -> None:
        if self.p < 2:
            raise PreconditionError(f"moment order p must be at least 2, got {self.p}")
        if not self.gamma > 0:
            raise PreconditionError(f"gamma = alpha + 2/p - 1 must be positive (got {self.gamma:g})")
        if self.beta is not None and not 0 < self.beta < self.gamma:
            raise PreconditionError(f"drift needs 0 < beta < gamma, got beta={self.beta}, gamma={self.gamma:g}")
        if self.k_min > self.k_max:
            raise PreconditionError("k_min must not exceed k_max")

    @property
    def gamma(self) -> float:
        return predicted_gamma(self.alpha, self.p)

    @property
    def deltas(self) -> NDArray[np.float64]:
        return 2.0 ** -np.arange(self.k_min, self.k_max + 1, dtype=float)


@dataclass(frozen=True)
class FitResult:
    slope: float
    intercept: float
    r_squared: float
    slope_std_error: float
    rows_used: int


def fit_loglog(rows: Iterable[Tuple[float, float]]) -> FitResult:
    """Least-squares line through ``(log delta, log moment)``.

    Rows with a non-positive moment are dropped with a warning.
    """
    rows = [(float(d), float(m)) for d, m in rows]
    usable = [(d, m) for d, m in rows if m > 0 and d > 0 and math.isfinite(m)]
    dropped = len(rows) - len(usable)
    if dropped:
        logger.warning(f"Dropped {dropped} row(s) with non-positive moments from the log-log fit")
    if len(usable) < MIN_FIT_ROWS:
        raise FitError(f"log-log fit needs at least {MIN_FIT_ROWS} positive rows, got {len(usable)}")
    log_d = np.log([d for d, _ in usable])
    log_m = np.log([m for _, m in usable])
    fit = stats.linregress(log_d, log_m)
    return FitResult(
        slope=float(fit.slope),
        intercept=float(fit.intercept),
        r_squared=float(fit.rvalue**2),
        slope_std_error=float(fit.stderr),
        rows_used=len(usable),
    )


@dataclass
class RegularityReport:
    rows: pd.DataFrame
    predicted_slope: float
    pathway: str
    fit: Optional[FitResult] = None
    passed: Optional[bool] = None
    degenerate: bool = False
    epsilon_checks: List[Dict[str, Any]] = field(default_factory=list)

    def to_frame(self) -> pd.DataFrame:
        """Rows as CSV columns k, delta, moment, std_error."""
        return self.rows[["k", "delta", "moment", "std_error"]]

    def summary(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {
            "pathway": self.pathway,
            "predicted": self.predicted_slope,
            "degenerate": self.degenerate,
            "pass": self.passed,
            "epsilon_checks": self.epsilon_checks,
        }
        data.update(asdict(self.fit) if self.fit else {"slope": None})
        return data


def _check_resolution(deltas: NDArray[np.float64], grid: GridSpec) -> None:
    too_small = deltas[deltas < MIN_RESOLVED_SPACINGS * grid.spacing]
    if too_small.size:
        raise ResolutionError(
            f"pair distance {too_small.min():g} is below {MIN_RESOLVED_SPACINGS} grid spacings ({grid.spacing:g})"
        )


def _anchor_points(config: RegularityConfig, grid: GridSpec) -> NDArray[np.float64]:
    """Anchor first, then ``anchor + delta_k e_1`` for every k."""
    offsets = np.concatenate(([0.0], config.deltas))
    points = np.zeros((offsets.size, grid.dimension))
    points[:, 0] = config.anchor + offsets
    return points


def _exact_moments(config, coeffs, grid, spec) -> Tuple[NDArray, NDArray]:
    points = _anchor_points(config, grid)
    moments = np.array([second_moment_p2(config.t, point, points[0], coeffs, grid, spec) for point in points[1:]])
    return moments, np.zeros_like(moments)


def _increment_moments(increments: NDArray[np.float64], p: float) -> Tuple[NDArray, NDArray]:
    """Mean and standard error of ``|increment|^p`` per column; ``increments`` is (paths, k, d)."""
    powered = np.linalg.norm(increments, axis=-1) ** p
    count = powered.shape[0]
    return powered.mean(axis=0), powered.std(axis=0, ddof=1) / math.sqrt(count)


def _monte_carlo_moments(config, coeffs, grid, spec) -> Tuple[NDArray, NDArray]:
    time_grid = TimeGrid(
        horizon=config.t,
        steps=config.time_steps,
        grading="graded",
        kappa=max(config.kappa, 2.0 / config.alpha),
    )
    weights = PointGradient(config.t, _anchor_points(config, grid), coeffs, time_grid, grid, spec)
    blocks = [weights.sample(config.seed, chunk) for chunk in path_chunks(config.paths, CHUNK_PATHS)]
    gradients = np.concatenate(blocks)
    return _increment_moments(gradients[:, 1:, :] - gradients[:, :1, :], config.p)


def _drift_moments(config, coeffs, grid, spec, time_grid: TimeGrid) -> Tuple[NDArray, NDArray]:
    """Per-path Picard solutions, gradients interpolated at the pair points (d = 1)."""
    if grid.dimension != 1:
        raise PreconditionError("the drift pathway of the seminorm estimate is one-dimensional")
    points = _anchor_points(config, grid)[:, 0]

    def one_path(index: int) -> NDArray[np.float64]:
        path = sample_noise_path(time_grid, spec, config.seed, index)
        _, gradient = solve_with_drift(coeffs, config.t, path, grid, spec).at(config.t)
        return np.interp(points, grid.axis, gradient[0])

    gradients = np.array(ordered_map(one_path, range(config.paths)))
    return _increment_moments((gradients[:, 1:] - gradients[:, :1])[..., None], config.p)


def estimate_seminorm(
    config: RegularityConfig,
    coeffs: Coefficients,
    grid: GridSpec,
    spec: Optional[LevyMeasureSpec] = None,
    time_grid: Optional[TimeGrid] = None,
) -> RegularityReport:
    """Increment moments ``E |grad u(t, x0 + delta) - grad u(t, x0)|^p`` and their log-log slope.

    The exact isometry pathway is used for ``p = 2`` without drift when
    ``config.exact`` is set; otherwise Monte Carlo over ``config.paths``.
    """
    deltas = config.deltas
    _check_resolution(deltas, grid)
    if coeffs.has_drift:
        beta = coeffs.drift_exponent if config.beta is None else config.beta
        if not 0 < beta < config.gamma:
            raise PreconditionError(f"drift needs 0 < beta < gamma, got beta={beta}, gamma={config.gamma:g}")
        if time_grid is None:
            raise PreconditionError("the drift pathway needs a uniform time grid")
        pathway = "picard"
        moments, errors = _drift_moments(config, coeffs, grid, spec, time_grid)
    elif config.p == 2 and config.exact:
        pathway = "exact"
        moments, errors = _exact_moments(config, coeffs, grid, spec)
    else:
        pathway = "monte_carlo"
        moments, errors = _monte_carlo_moments(config, coeffs, grid, spec)

    ks = np.arange(config.k_min, config.k_max + 1)
    in_fit = deltas >= FIT_WINDOW_SPACINGS * grid.spacing
    rows = pd.DataFrame({"k": ks, "delta": deltas, "moment": moments, "std_error": errors, "in_fit": in_fit})
    predicted = config.gamma * config.p
    logger.info(f"Seminorm rows computed by the {pathway} pathway; predicted slope {predicted:g}")

    if np.all(moments == 0):
        logger.warning("All increment moments vanish; the report is degenerate and carries no verdict")
        return RegularityReport(rows=rows, predicted_slope=predicted, pathway=pathway, degenerate=True)

    fit = fit_loglog(zip(deltas[in_fit], moments[in_fit]))
    passed: Optional[bool] = abs(fit.slope - predicted) <= config.fit_tolerance
    if pathway != "exact" and fit.slope_std_error > MAX_SLOPE_STD_ERROR:
        logger.warning(
            f"Slope standard error {fit.slope_std_error:.3f} exceeds {MAX_SLOPE_STD_ERROR}; no pass/fail verdict"
        )
        passed = None
    checks = []
    for fraction in EPSILON_FRACTIONS:
        epsilon = fraction * config.gamma
        threshold = (config.gamma - epsilon) * config.p - config.fit_tolerance
        checks.append({"epsilon": epsilon, "threshold": threshold, "ok": bool(fit.slope >= threshold)})
    return RegularityReport(
        rows=rows,
        predicted_slope=predicted,
        pathway=pathway,
        fit=fit,
        passed=passed,
        epsilon_checks=checks,
    )


# -- optimality --------------------------------------------------------------


@dataclass
class OptimalityTable:
    table: pd.DataFrame
    alpha: float
    delta: float
    fit: FitResult
    band_ratio: float
    max_jump_difference: float

    @property
    def predicted_slope(self) -> float:
        return self.alpha - self.delta

    def summary(self, tolerance: float = 0.05) -> Dict[str, Any]:
        slope_ok = abs(self.fit.slope - self.predicted_slope) <= tolerance
        band_ok = self.band_ratio <= OPTIMALITY_BAND
        jump_ok = self.max_jump_difference <= 1e-10
        return {
            "slope": self.fit.slope,
            "predicted": self.predicted_slope,
            "slope_std_error": self.fit.slope_std_error,
            "band_ratio": self.band_ratio,
            "max_jump_difference": self.max_jump_difference,
            "pass": bool(slope_ok and band_ok and jump_ok),
        }


def optimality_experiment(
    alpha: float,
    delta: float,
    t: float,
    grid: GridSpec,
    k_range: Sequence[int] = tuple(range(1, 10)),
    spec: Optional[LevyMeasureSpec] = None,
    fit_k_min: int = OPTIMALITY_FIT_K_MIN,
) -> OptimalityTable:
    """``sqrt(E |grad u(t, x) - grad u(t, 0)|^2) / x^delta`` for ``x = 2^-k``.

    ``f = min(x_+^alpha, 1)``; the table also carries the ``delta = alpha``
    baseline and the jump-noise variant ``g = f psi`` with ``psi`` of unit
    ``L2(nu)`` norm.

    The slope is fitted on the rows with ``k >= fit_k_min`` only (column
    ``in_fit``). Larger ``x`` reach the cap of ``f`` at 1, where the moment
    grows slower than ``x^(2 alpha)``. The band of the critical ratio is
    taken over every row.
    """
    if not 0 < alpha < 1:
        raise MisuseError(f"alpha must lie in (0, 1), got {alpha}")
    if delta <= alpha or delta >= 1:
        raise MisuseError(f"exponent delta must satisfy alpha < delta < 1, got delta={delta}, alpha={alpha}")
    if spec is None:
        spec = LevyMeasureSpec(family="uniform", outer_radius=1.0, inner_cutoff=0.5, mass=2.0)
    f = capped_power_field(alpha, dimension=grid.dimension, name="f")
    wiener = Coefficients(f=f)
    jump = Coefficients(g=JumpCoefficient(f, MarkProfile()).normalized(spec))
    origin = np.zeros(grid.dimension)

    rows = []
    for k in k_range:
        x = 2.0**-k
        point = origin.copy()
        point[0] = x
        m_w = second_moment_p2(t, point, origin, wiener, grid)
        m_j = second_moment_p2(t, point, origin, jump, grid, spec)
        rows.append(
            {
                "k": k,
                "x": x,
                "moment": m_w,
                "ratio": math.sqrt(m_w) / x**delta,
                "ratio_critical": math.sqrt(m_w) / x**alpha,
                "ratio_jump": math.sqrt(m_j) / x**delta,
                "in_fit": k >= fit_k_min,
            }
        )
    table = pd.DataFrame(rows)
    fitted = table[table["in_fit"]]
    fit = fit_loglog(zip(fitted["x"], fitted["ratio"]))
    band = float(table["ratio_critical"].max() / table["ratio_critical"].min())
    jump_difference = float(np.max(np.abs(table["ratio_jump"] - table["ratio"])))
    logger.info(f"Optimality slope {fit.slope:.4f} (predicted {alpha - delta:g}), critical band {band:.3f}")
    return OptimalityTable(table, alpha, delta, fit, band, jump_difference)
