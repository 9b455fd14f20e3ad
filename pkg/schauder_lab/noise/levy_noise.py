"""Wiener increments, finite-activity Poisson random measures and compensators.

Jump coefficients vanish for marks below the inner cutoff ``rho``, so every
Lévy measure is simulated restricted to ``[rho, c)``: a compound Poisson
stream with total intensity ``Lambda = nu([rho, c))``.
"""

import functools
import math
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import integrate

from schauder_lab.errors import AlignmentError, HorizonError, LevyMeasureError
from schauder_lab.logging_config import get_logger
from schauder_lab.noise.streams import stream
from schauder_lab.parallel import ordered_map

logger = get_logger(__name__)

MARK_TABLE_SIZE = 4096
LEVY_FAMILIES = ("uniform", "power_law", "table")
GRADINGS = ("uniform", "graded", "explicit")
ALIGNMENT_TOLERANCE = 1e-12


@dataclass(frozen=True)
class TimeGrid:
    """Partition ``0 = t_0 < ... < t_m = T``, uniform or graded toward ``T``.

    The graded mesh puts ``t_j = T - T (1 - j/m)^kappa``; with ``kappa = 2`` the
    node density grows like ``(T - r)^(-1/2)``. An ``explicit`` grid takes its
    nodes from ``breakpoints``.
    """

    horizon: float
    steps: int
    grading: str = "uniform"
    kappa: float = 2.0
    breakpoints: Optional[Tuple[float, ...]] = None

    def __post_init__(self) -> None:
        if not self.horizon > 0:
            raise ValueError(f"time horizon must be positive, got {self.horizon}")
        if self.steps < 1:
            raise ValueError(f"time grid needs at least one step, got {self.steps}")
        if self.grading not in GRADINGS:
            raise ValueError(f"grading must be one of {GRADINGS}, got {self.grading!r}")
        if self.grading == "graded" and not self.kappa >= 1:
            raise ValueError(f"grading exponent kappa must be >= 1, got {self.kappa}")
        if (self.grading == "explicit") != (self.breakpoints is not None):
            raise ValueError("breakpoints are given exactly when the grading is explicit")
        if self.breakpoints is not None:
            breaks = np.asarray(self.breakpoints, dtype=float)
            if breaks.size != self.steps + 1 or breaks[0] != 0.0 or breaks[-1] != self.horizon:
                raise ValueError(f"breakpoints must run from 0 to the horizon {self.horizon} in {self.steps} steps")
            if np.any(np.diff(breaks) <= 0):
                raise ValueError("breakpoints must be strictly increasing")

    @classmethod
    def from_breakpoints(cls, breakpoints: Sequence[float]) -> "TimeGrid":
        breaks = tuple(float(b) for b in breakpoints)
        return cls(horizon=breaks[-1], steps=len(breaks) - 1, grading="explicit", breakpoints=breaks)

    @functools.cached_property
    def nodes(self) -> NDArray[np.float64]:
        fraction = np.arange(self.steps + 1) / self.steps
        if self.grading == "explicit":
            nodes = np.array(self.breakpoints, dtype=float)
        elif self.grading == "uniform":
            nodes = self.horizon * fraction
        else:
            nodes = self.horizon - self.horizon * (1.0 - fraction) ** self.kappa
        nodes[0], nodes[-1] = 0.0, self.horizon
        nodes.setflags(write=False)
        return nodes

    @property
    def step_lengths(self) -> NDArray[np.float64]:
        return np.diff(self.nodes)

    @property
    def is_uniform(self) -> bool:
        return self.grading == "uniform" or (self.grading == "graded" and self.kappa == 1.0)

    def index_of(self, t: float) -> int:
        """Index of the node equal to ``t``."""
        if t > self.horizon * (1.0 + ALIGNMENT_TOLERANCE):
            raise HorizonError(f"time {t} lies beyond the grid horizon {self.horizon}")
        index = int(np.argmin(np.abs(self.nodes - t)))
        if abs(self.nodes[index] - t) > ALIGNMENT_TOLERANCE * max(1.0, self.horizon):
            raise AlignmentError(f"time {t} is not a node of the time grid")
        return index

    def indices_of(self, times: Sequence[float]) -> NDArray[np.int64]:
        return np.array([self.index_of(t) for t in times], dtype=np.int64)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "horizon": self.horizon,
            "steps": self.steps,
            "grading": self.grading,
            "kappa": self.kappa,
            **({"breakpoints": list(self.breakpoints)} if self.breakpoints is not None else {}),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "TimeGrid":
        return cls(
            horizon=float(data["horizon"]),
            steps=int(data["steps"]),
            grading=str(data.get("grading", "explicit" if "breakpoints" in data else "uniform")),
            kappa=float(data.get("kappa", 2.0)),
            breakpoints=tuple(float(b) for b in data["breakpoints"]) if "breakpoints" in data else None,
        )


@dataclass(frozen=True)
class LevyMeasureSpec:
    """Lévy measure ``nu`` on ``E = (0, c)`` restricted to ``[rho, c)``.

    Families:
        ``uniform``: constant density ``mass / (c - rho)``.
        ``power_law``: density ``scale * v^(-1 - sigma)`` with ``sigma < 2``.
        ``table``: piecewise-linear density through ``(table_marks, table_density)``.
    """

    family: str
    outer_radius: float
    inner_cutoff: float
    mass: float = 0.0
    scale: float = 1.0
    sigma: float = 0.5
    table_marks: Tuple[float, ...] = ()
    table_density: Tuple[float, ...] = ()

    def __post_init__(self) -> None:
        violations = self._violations()
        if violations:
            raise LevyMeasureError("; ".join(violations))
        if not math.isfinite(self.total_mass):
            raise LevyMeasureError(f"effective mass Lambda must be finite, got {self.total_mass}")
        if not math.isfinite(self.integrability()):
            raise LevyMeasureError("int (1 ∧ v^2) nu(dv) must be finite")
        table = self.inverse_cdf_table
        if table.size and np.any(np.diff(table) < 0):
            raise LevyMeasureError("inverse-CDF table is not monotone")

    def _violations(self) -> List[str]:
        violations = []
        if self.family not in LEVY_FAMILIES:
            violations.append(f"levy family must be one of {LEVY_FAMILIES}, got {self.family!r}")
        if not self.outer_radius > 0:
            violations.append(f"outer radius c must be positive, got {self.outer_radius}")
        if not 0 < self.inner_cutoff < self.outer_radius:
            violations.append(
                f"inner cutoff rho must lie in (0, c), got rho={self.inner_cutoff}, c={self.outer_radius}"
            )
        if self.family == "uniform" and not (self.mass >= 0 and math.isfinite(self.mass)):
            violations.append(f"uniform mass must be finite and nonnegative, got {self.mass}")
        if self.family == "power_law":
            if not self.sigma < 2:
                violations.append(
                    f"power-law exponent sigma must be < 2 for a Lévy measure, got {self.sigma}"
                )
            if not self.scale >= 0:
                violations.append(f"power-law scale must be nonnegative, got {self.scale}")
        if self.family == "table":
            marks = np.asarray(self.table_marks, dtype=float)
            density = np.asarray(self.table_density, dtype=float)
            if marks.size < 2 or marks.size != density.size:
                violations.append("table needs at least two (mark, density) pairs of equal length")
            elif np.any(np.diff(marks) <= 0):
                violations.append("table marks must be strictly increasing")
            elif marks[0] < self.inner_cutoff or marks[-1] > self.outer_radius:
                violations.append("table marks must lie within [rho, c]")
            elif np.any(density < 0) or not np.all(np.isfinite(density)):
                violations.append("table density must be finite and nonnegative")
        return violations

    # -- measure -------------------------------------------------------------

    def density(self, v: ArrayLike) -> NDArray[np.float64]:
        marks = np.asarray(v, dtype=float)
        inside = (marks >= self.inner_cutoff) & (marks < self.outer_radius)
        if self.family == "uniform":
            values = np.full(marks.shape, self.mass / (self.outer_radius - self.inner_cutoff))
        elif self.family == "power_law":
            safe = np.where(inside, marks, 1.0)
            values = self.scale * safe ** (-1.0 - self.sigma)
        else:
            values = np.interp(marks, self.table_marks, self.table_density, left=0.0, right=0.0)
        return np.where(inside, values, 0.0)

    def cdf(self, v: ArrayLike) -> NDArray[np.float64]:
        """Normalized distribution function of the marks on ``[rho, c)``."""
        marks = np.clip(np.asarray(v, dtype=float), self.inner_cutoff, self.outer_radius)
        rho, c = self.inner_cutoff, self.outer_radius
        if self.family == "uniform":
            return (marks - rho) / (c - rho)
        if self.family == "power_law":
            if self.sigma == 0:
                return np.log(marks / rho) / math.log(c / rho)
            return (rho ** -self.sigma - marks ** -self.sigma) / (rho ** -self.sigma - c ** -self.sigma)
        cumulative = self._table_cumulative
        if cumulative[-1] == 0:
            return np.zeros_like(marks)
        return self._table_mass_below(marks) / cumulative[-1]

    @functools.cached_property
    def _table_cumulative(self) -> NDArray[np.float64]:
        """``nu([marks[0], marks[j]))`` at every table mark; exact for the linear density."""
        return integrate.cumulative_trapezoid(self.table_density, self.table_marks, initial=0.0)

    @functools.cached_property
    def _table_segments(self) -> Tuple[NDArray[np.float64], NDArray[np.float64], NDArray[np.float64]]:
        """Left marks, left densities and density slopes of the table segments."""
        marks = np.asarray(self.table_marks, dtype=float)
        density = np.asarray(self.table_density, dtype=float)
        return marks[:-1], density[:-1], np.diff(density) / np.diff(marks)

    def _table_mass_below(self, v: NDArray[np.float64]) -> NDArray[np.float64]:
        """Integral of the piecewise-linear density from the first mark to ``v``."""
        marks = np.asarray(self.table_marks, dtype=float)
        v = np.clip(v, marks[0], marks[-1])
        left, base, slope = self._table_segments
        j = np.clip(np.searchsorted(marks, v, side="right") - 1, 0, left.size - 1)
        s = v - left[j]
        return self._table_cumulative[j] + base[j] * s + 0.5 * slope[j] * s * s

    def _table_quantile(self, levels: NDArray[np.float64]) -> NDArray[np.float64]:
        """Inverse of the normalized table cdf, solving the quadratic on each segment."""
        cumulative = self._table_cumulative
        target = np.clip(levels, 0.0, 1.0) * cumulative[-1]
        left, base, slope = self._table_segments
        j = np.clip(np.searchsorted(cumulative, target, side="right") - 1, 0, left.size - 1)
        rest = target - cumulative[j]
        root = np.sqrt(np.maximum(base[j] ** 2 + 2.0 * slope[j] * rest, 0.0))
        denominator = base[j] + root
        safe = np.where(denominator > 0, denominator, 1.0)
        s = np.where(denominator > 0, 2.0 * rest / safe, 0.0)
        return np.clip(left[j] + s, self.table_marks[0], self.table_marks[-1])

    @functools.cached_property
    def total_mass(self) -> float:
        """Effective mass ``Lambda = nu([rho, c))``."""
        rho, c = self.inner_cutoff, self.outer_radius
        if self.family == "uniform":
            return float(self.mass)
        if self.family == "power_law":
            if self.sigma == 0:
                return float(self.scale * math.log(c / rho))
            return float(self.scale * (rho ** -self.sigma - c ** -self.sigma) / self.sigma)
        return float(self._table_cumulative[-1])

    def measure(self, lower: float, upper: float) -> float:
        """``nu([lower, upper))``."""
        return float(self.total_mass * (self.cdf(upper) - self.cdf(lower)))

    def integrability(self) -> float:
        """``int_E (1 ∧ v^2) nu(dv)`` over all of ``E``, by quadrature.

        The power-law family is integrated down to ``v = 0``, which is where
        ``sigma >= 2`` would fail.
        """
        if self.family != "power_law":
            return self.integrate(lambda v: np.minimum(1.0, v * v))
        if self.scale == 0:
            return 0.0
        c = self.outer_radius
        points = [1.0] if c > 1.0 else None
        value, _ = integrate.quad(
            lambda v: min(1.0, v * v) * self.scale * v ** (-1.0 - self.sigma),
            0.0,
            c,
            points=points,
            limit=200,
        )
        return float(value)

    @functools.cached_property
    def mark_rule(self) -> Tuple[NDArray[np.float64], NDArray[np.float64]]:
        """Quadrature nodes on ``[rho, c)`` and weights with the density folded in."""
        rho, c = self.inner_cutoff, self.outer_radius
        edges = np.geomspace(rho, c, 33)
        if self.family == "table":
            edges = np.unique(np.concatenate((edges, np.asarray(self.table_marks, dtype=float))))
        xi, omega = np.polynomial.legendre.leggauss(16)
        half = 0.5 * np.diff(edges)
        nodes = (edges[:-1, None] + half[:, None] * (xi[None, :] + 1.0)).reshape(-1)
        weights = (half[:, None] * omega[None, :]).reshape(-1) * self.density(nodes)
        return nodes, weights

    def integrate(self, fn: Callable[[NDArray[np.float64]], ArrayLike]) -> float:
        """``int_[rho, c) fn(v) nu(dv)`` by panel Gauss-Legendre quadrature."""
        nodes, weights = self.mark_rule
        values = np.broadcast_to(np.asarray(fn(nodes), dtype=float), nodes.shape)
        return float(np.dot(weights, values))

    # -- sampling ------------------------------------------------------------

    @functools.cached_property
    def inverse_cdf_table(self) -> NDArray[np.float64]:
        if self.family != "table":
            return np.empty(0)
        cumulative = self._table_cumulative
        if cumulative[-1] == 0:
            return np.full(MARK_TABLE_SIZE, self.table_marks[0])
        return self._table_quantile(np.linspace(0.0, 1.0, MARK_TABLE_SIZE))

    def sample_marks(self, u: ArrayLike) -> NDArray[np.float64]:
        """Map uniforms on ``[0, 1)`` to marks on ``[rho, c)`` by inverse CDF."""
        levels = np.asarray(u, dtype=float)
        rho, c = self.inner_cutoff, self.outer_radius
        if self.family == "uniform":
            marks = rho + levels * (c - rho)
        elif self.family == "power_law":
            if self.sigma == 0:
                marks = rho * (c / rho) ** levels
            else:
                inner, outer = rho ** -self.sigma, c ** -self.sigma
                marks = (inner - levels * (inner - outer)) ** (-1.0 / self.sigma)
        else:
            marks = np.interp(levels, np.linspace(0.0, 1.0, MARK_TABLE_SIZE), self.inverse_cdf_table)
        return np.clip(marks, rho, np.nextafter(c, rho))

    # -- config --------------------------------------------------------------

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {
            "family": self.family,
            "outer_radius": self.outer_radius,
            "inner_cutoff": self.inner_cutoff,
        }
        if self.family == "uniform":
            data["mass"] = self.mass
        elif self.family == "power_law":
            data.update(scale=self.scale, sigma=self.sigma)
        else:
            data.update(marks=list(self.table_marks), density=list(self.table_density))
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "LevyMeasureSpec":
        return cls(
            family=str(data.get("family", "uniform")),
            outer_radius=float(data["outer_radius"]),
            inner_cutoff=float(data["inner_cutoff"]),
            mass=float(data.get("mass", 0.0)),
            scale=float(data.get("scale", 1.0)),
            sigma=float(data.get("sigma", 0.5)),
            table_marks=tuple(float(v) for v in data.get("marks", ())),
            table_density=tuple(float(v) for v in data.get("density", ())),
        )


@dataclass(frozen=True)
class JumpEvents:
    times: NDArray[np.float64]
    marks: NDArray[np.float64]

    def __len__(self) -> int:
        return int(self.times.size)


@dataclass(frozen=True, eq=False)
class NoisePath:
    """One realization of the Wiener increments and the jump events."""

    time_grid: TimeGrid
    wiener_increments: NDArray[np.float64]
    jumps: JumpEvents
    master_seed: int
    path_index: int

    def __post_init__(self) -> None:
        if self.wiener_increments.shape != (self.time_grid.steps,):
            raise ValueError(
                f"expected {self.time_grid.steps} Wiener increments, got {self.wiener_increments.shape}"
            )
        times = self.jumps.times
        if times.size and (
            np.any(np.diff(times) <= 0) or times[0] <= 0 or times[-1] > self.time_grid.horizon
        ):
            raise ValueError("jump times must be strictly increasing within (0, T]")

    @property
    def horizon(self) -> float:
        return self.time_grid.horizon

    @functools.cached_property
    def wiener_path(self) -> NDArray[np.float64]:
        """``W`` at the grid nodes, starting from ``W_0 = 0``."""
        return np.concatenate(([0.0], np.cumsum(self.wiener_increments)))

    def jumps_in(self, lower: float, upper: float) -> JumpEvents:
        """Jumps with ``lower < tau <= upper``."""
        mask = (self.jumps.times > lower) & (self.jumps.times <= upper)
        return JumpEvents(self.jumps.times[mask], self.jumps.marks[mask])


def sample_wiener(grid: TimeGrid, seed: Tuple[int, int]) -> NDArray[np.float64]:
    """Independent Gaussian increments with variances equal to the step lengths."""
    master, path_index = seed
    rng = stream(master, path_index, "wiener")
    return rng.standard_normal(grid.steps) * np.sqrt(grid.step_lengths)


def sample_jumps(horizon: float, spec: LevyMeasureSpec, seed: Tuple[int, int]) -> JumpEvents:
    """Poisson(Lambda T) jumps, uniform times on (0, T], marks drawn from ``nu / Lambda``."""
    master, path_index = seed
    intensity = spec.total_mass * horizon
    count = int(stream(master, path_index, "jump-count").poisson(intensity)) if intensity > 0 else 0
    if count == 0:
        return JumpEvents(np.empty(0), np.empty(0))
    times = np.sort(horizon - horizon * stream(master, path_index, "jump-times").random(count))
    marks = spec.sample_marks(stream(master, path_index, "marks").random(count))
    return JumpEvents(times, marks)


def sample_noise_path(
    grid: TimeGrid, spec: Optional[LevyMeasureSpec], master_seed: int, path_index: int
) -> NoisePath:
    seed = (master_seed, path_index)
    jumps = sample_jumps(grid.horizon, spec, seed) if spec is not None else JumpEvents(
        np.empty(0), np.empty(0)
    )
    return NoisePath(
        time_grid=grid,
        wiener_increments=sample_wiener(grid, seed),
        jumps=jumps,
        master_seed=master_seed,
        path_index=path_index,
    )


def sample_paths(
    grid: TimeGrid,
    spec: Optional[LevyMeasureSpec],
    master_seed: int,
    count: int,
    start: int = 0,
) -> List[NoisePath]:
    """Paths ``start .. start + count - 1``, in path-index order."""
    return ordered_map(
        lambda index: sample_noise_path(grid, spec, master_seed, index),
        range(start, start + count),
    )


def wiener_matrix(grid: TimeGrid, master_seed: int, indices: Sequence[int]) -> NDArray[np.float64]:
    """Wiener increments of several paths stacked row-wise."""
    rows = ordered_map(lambda index: sample_wiener(grid, (master_seed, index)), indices)
    return np.vstack(rows) if rows else np.empty((0, grid.steps))


StepLike = Any
CompensatorIntegrand = Union[float, Callable[[NDArray[np.float64], NDArray[np.float64]], ArrayLike], StepLike]


def compensator_integral(H: CompensatorIntegrand, spec: LevyMeasureSpec, t: float) -> float:
    """``int_0^t int_E H(r, v) nu(dv) dr``.

    ``H`` may be a constant, a step integrand (anything with
    ``time_breakpoints``, ``mark_cells`` and ``values``), or a vectorized
    callable ``H(r, v)``, integrated by Gauss-Legendre in time and the mark
    quadrature of ``spec``.
    """
    if t <= 0:
        return 0.0
    if hasattr(H, "time_breakpoints"):
        breaks = np.asarray(H.time_breakpoints, dtype=float)
        durations = np.clip(np.minimum(breaks[1:], t) - breaks[:-1], 0.0, None)
        cell_masses = np.array([spec.measure(lower, upper) for lower, upper in H.mark_cells])
        return float(durations @ np.asarray(H.values, dtype=float) @ cell_masses)
    if not callable(H):
        return float(H) * spec.total_mass * t
    xi, omega = np.polynomial.legendre.leggauss(64)
    times = 0.5 * t * (xi + 1.0)
    time_weights = 0.5 * t * omega
    marks, mark_weights = spec.mark_rule
    values = np.broadcast_to(
        np.asarray(H(times[:, None], marks[None, :]), dtype=float), (times.size, marks.size)
    )
    return float(time_weights @ values @ mark_weights)
