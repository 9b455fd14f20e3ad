"""Transport term by windowed Picard iteration with frozen noise.

On a window ``[a, a + T]`` the map ``S`` solves the transport-free equation
with the forcing ``b . grad u1`` taken from the previous iterate and the
window's starting state carried by the heat flow. Iterates are compared in
the grid sup-norm of ``u`` and ``grad u``; a window that fails to contract
is halved, and once a window converges the next one starts from its
terminal state.
"""

import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from numpy.typing import NDArray

from schauder_lab.errors import NonConvergenceError, PreconditionError
from schauder_lab.heat.heat_kernel import GridSpec
from schauder_lab.logging_config import get_logger
from schauder_lab.noise.levy_noise import LevyMeasureSpec, NoisePath
from schauder_lab.solution.fields import Coefficients
from schauder_lab.solution.mild_solution import MildOperator, State, compose

logger = get_logger(__name__)

DEFAULT_TOLERANCE = 1e-4
MAX_ITERATES = 20
# ratios of the first two iterates are not judged
WARMUP_ITERATES = 2
MIN_WINDOW_FRACTION = 2.0**-16
TRIAL_RATIO = 0.5


@dataclass
class Trajectory:
    """``u`` and ``grad u`` at consecutive time nodes."""

    times: NDArray[np.float64]
    u: NDArray[np.float64]
    gradient: NDArray[np.float64]

    @classmethod
    def starting_from(cls, times: NDArray[np.float64], state: State) -> "Trajectory":
        """Zero iterate that already holds the known state at the first node."""
        u = np.zeros((times.size,) + state[0].shape)
        gradient = np.zeros((times.size,) + state[1].shape)
        u[0], gradient[0] = state
        return cls(np.asarray(times, dtype=float), u, gradient)

    def distance(self, other: "Trajectory") -> float:
        """``max(sup |u - u'|, sup |grad u - grad u'|)`` over all nodes."""
        return float(max(np.max(np.abs(self.u - other.u)), np.max(np.abs(self.gradient - other.gradient))))

    def terminal(self) -> State:
        return self.u[-1].copy(), self.gradient[-1].copy()


@dataclass
class PicardState:
    window: float
    window_index: int
    iterate: int
    current: Trajectory
    distances: List[float] = field(default_factory=list)
    ratios: List[float] = field(default_factory=list)

    def advance(self, nxt: Trajectory) -> float:
        distance = nxt.distance(self.current)
        if self.distances:
            previous = self.distances[-1]
            ratio = distance / previous if previous > 0 else (0.0 if distance == 0 else math.inf)
        else:
            ratio = math.nan
        self.distances.append(distance)
        self.ratios.append(ratio)
        self.iterate += 1
        self.current = nxt
        return ratio

    @property
    def diverging(self) -> bool:
        return self.iterate > WARMUP_ITERATES and self.ratios[-1] >= 1.0


@dataclass(frozen=True)
class WindowRecord:
    index: int
    start: float
    end: float
    steps: int
    iterates: int
    residual: float
    distances: Tuple[float, ...]
    ratios: Tuple[float, ...]


class _WindowFailure(Exception):
    pass


class WindowMap:
    """The map ``S`` on one window, with the drift-free terms precomputed per node."""

    def __init__(
        self,
        coeffs: Coefficients,
        path: NoisePath,
        grid: GridSpec,
        spec: Optional[LevyMeasureSpec],
        start: int,
        stop: int,
        initial: Optional[State] = None,
    ) -> None:
        nodes = path.time_grid.nodes
        self.coeffs = coeffs
        self.grid = grid
        self.times = np.array(nodes[start : stop + 1])
        self.start, self.stop = start, stop
        base = coeffs.without_drift()
        self.operators = [
            MildOperator(nodes[k], base, path.time_grid, grid, spec, window_start=nodes[start])
            for k in range(start, stop + 1)
        ]
        self.base_terms = [op.terms(path, initial) for op in self.operators]
        if initial is None:
            d = grid.dimension
            initial = (np.zeros(grid.shape), np.zeros((d,) + grid.shape))
        self.initial = initial

    def zero_iterate(self) -> Trajectory:
        return Trajectory.starting_from(self.times, self.initial)

    def forcing(self, iterate: Trajectory) -> List[NDArray[np.float64]]:
        """``sum_i b_i(r) d_i u1(r)`` at every window node."""
        if iterate.gradient is None or iterate.gradient.shape[0] != self.times.size:
            raise PreconditionError("the previous iterate needs gradients at every window node")
        points = self.grid.points()
        forcing = []
        for k, r in enumerate(self.times):
            total = np.zeros(self.grid.shape)
            for i, b in enumerate(self.coeffs.drift):
                total = total + b(r, points) * iterate.gradient[k, i]
            forcing.append(total)
        return forcing

    def apply(self, iterate: Trajectory) -> Trajectory:
        forcing = self.forcing(iterate) if self.coeffs.has_drift else None
        u = np.empty((self.times.size,) + self.grid.shape)
        gradient = np.empty((self.times.size, self.grid.dimension) + self.grid.shape)
        for k, (operator, (values, gradients)) in enumerate(zip(self.operators, self.base_terms)):
            if forcing is not None:
                values, gradients = dict(values), dict(gradients)
                values["drift"], gradients["drift"] = operator.drift_term(forcing[: k + 1])
            u[k] = compose(values)
            gradient[k] = compose(gradients)
        return Trajectory(self.times, u, gradient)


def picard_step(
    previous: Trajectory,
    coeffs: Coefficients,
    window: Tuple[int, int],
    path: NoisePath,
    grid: GridSpec,
    spec: Optional[LevyMeasureSpec] = None,
    initial: Optional[State] = None,
) -> Trajectory:
    """One application of ``S``: the mild solution with ``h`` replaced by ``h + b . grad u1``.

    ``window`` holds the first and last time-node indices.
    """
    start, stop = window
    if previous is None or previous.gradient is None:
        raise PreconditionError("picard_step needs the previous iterate's gradient")
    if previous.u.shape[0] != stop - start + 1:
        raise PreconditionError(
            f"previous iterate has {previous.u.shape[0]} nodes, window has {stop - start + 1}"
        )
    return WindowMap(coeffs, path, grid, spec, start, stop, initial).apply(previous)


@dataclass
class DriftSolution:
    times: NDArray[np.float64]
    u: NDArray[np.float64]
    gradient: NDArray[np.float64]
    windows: List[WindowRecord]
    log: List[Dict[str, Any]]

    def at(self, t: float) -> State:
        index = int(np.argmin(np.abs(self.times - t)))
        return self.u[index], self.gradient[index]

    def log_frame(self) -> pd.DataFrame:
        """Convergence log: window index, iterate, d_n, ratio."""
        return pd.DataFrame(self.log, columns=["window", "iterate", "d_n", "ratio"])


def _solve_window(
    window_map: WindowMap, index: int, tol: float, max_iterates: int, log: List[Dict[str, Any]]
) -> Tuple[Trajectory, WindowRecord]:
    duration = float(window_map.times[-1] - window_map.times[0])
    state = PicardState(window=duration, window_index=index, iterate=0, current=window_map.zero_iterate())
    while state.iterate < max_iterates:
        ratio = state.advance(window_map.apply(state.current))
        distance = state.distances[-1]
        log.append({"window": index, "iterate": state.iterate, "d_n": distance, "ratio": ratio})
        logger.debug(f"window {index} iterate {state.iterate}: d_n={distance:.3e} ratio={ratio:.3f}")
        if distance < tol:
            residual = window_map.apply(state.current).distance(state.current)
            if residual < tol:
                record = WindowRecord(
                    index=index,
                    start=float(window_map.times[0]),
                    end=float(window_map.times[-1]),
                    steps=window_map.stop - window_map.start,
                    iterates=state.iterate,
                    residual=residual,
                    distances=tuple(state.distances),
                    ratios=tuple(state.ratios),
                )
                return state.current, record
        if state.diverging:
            break
    raise _WindowFailure(f"window {index} of length {duration:g} did not contract")


def _minimum_steps(horizon: float, step: float) -> int:
    return max(1, int(math.ceil(horizon * MIN_WINDOW_FRACTION / step - 1e-9)))


def _uniform_step(path: NoisePath) -> float:
    if not path.time_grid.is_uniform:
        raise PreconditionError("the Picard solver needs a uniform time grid")
    return float(path.time_grid.horizon / path.time_grid.steps)


def solve_with_drift(
    coeffs: Coefficients,
    horizon: float,
    path: NoisePath,
    grid: GridSpec,
    spec: Optional[LevyMeasureSpec] = None,
    tol: float = DEFAULT_TOLERANCE,
    window: Optional[float] = None,
    max_iterates: int = MAX_ITERATES,
) -> DriftSolution:
    """March over ``[0, horizon]`` in windows, halving any window that fails to contract.

    Raises:
        NonConvergenceError: a window shrank below the minimum length; carries the convergence log.
    """
    step = _uniform_step(path)
    end = path.time_grid.index_of(horizon)
    nodes = path.time_grid.nodes
    min_steps = _minimum_steps(horizon, step)
    if not coeffs.has_drift:
        window_steps = end
    elif window is None:
        window_steps = max(1, end // 4)
    else:
        window_steps = max(1, int(math.floor(window / step + 1e-9)))

    d = grid.dimension
    state: State = (np.zeros(grid.shape), np.zeros((d,) + grid.shape))
    us, gradients = [state[0]], [state[1]]
    windows: List[WindowRecord] = []
    log: List[Dict[str, Any]] = []
    start = 0
    while start < end:
        steps = min(window_steps, end - start)
        while True:
            window_map = WindowMap(coeffs, path, grid, spec, start, start + steps, state)
            try:
                if coeffs.has_drift:
                    trajectory, record = _solve_window(window_map, len(windows), tol, max_iterates, log)
                else:
                    trajectory = window_map.apply(window_map.zero_iterate())
                    record = WindowRecord(len(windows), nodes[start], nodes[start + steps], steps, 1, 0.0, (), ())
                break
            except _WindowFailure as exc:
                if steps // 2 < min_steps:
                    logger.error(f"{exc}; window cannot shrink below {min_steps} step(s)")
                    raise NonConvergenceError(
                        f"Picard iteration did not contract on a window of {steps} step(s) at t={nodes[start]:g}",
                        ratio_history=log,
                    ) from exc
                steps //= 2
                logger.warning(f"{exc}; halving to {steps} step(s)")
        logger.info(
            f"window {record.index} [{record.start:g}, {record.end:g}] converged after {record.iterates} iterate(s)"
        )
        windows.append(record)
        window_steps = steps
        us.extend(trajectory.u[1:])
        gradients.extend(trajectory.gradient[1:])
        state = trajectory.terminal()
        start += steps

    return DriftSolution(
        times=np.array(nodes[: end + 1]),
        u=np.stack(us),
        gradient=np.stack(gradients),
        windows=windows,
        log=log,
    )


@dataclass(frozen=True)
class WindowEstimate:
    window: float
    steps: int
    ratio: float
    trials: Tuple[Dict[str, float], ...]


def estimate_window(
    coeffs: Coefficients,
    path: NoisePath,
    grid: GridSpec,
    spec: Optional[LevyMeasureSpec] = None,
    *,
    initial_window: float,
    p: float,
    alpha: float,
    beta: Optional[float] = None,
) -> WindowEstimate:
    """Largest tried window whose second Picard ratio is below one half.

    The first candidate is ``min(initial_window, 1 / (4 |b|^2))`` with ``|b|``
    the declared sup-norm plus seminorm; it is halved until two trial steps
    from the zero iterate contract by a factor below one half.
    """
    gamma = alpha + 2.0 / p - 1.0
    if not coeffs.has_drift:
        return WindowEstimate(initial_window, 0, 0.0, ())
    beta = coeffs.drift_exponent if beta is None else beta
    if not 0 < beta < gamma:
        raise PreconditionError(f"drift exponent must satisfy 0 < beta < gamma, got beta={beta}, gamma={gamma}")
    step = _uniform_step(path)
    horizon_steps = path.time_grid.steps
    candidate = min(initial_window, 1.0 / (4.0 * coeffs.drift_norm**2))
    steps = min(horizon_steps, max(1, int(math.floor(candidate / step + 1e-9))))
    min_steps = _minimum_steps(path.time_grid.horizon, step)
    trials: List[Dict[str, float]] = []
    while True:
        window_map = WindowMap(coeffs, path, grid, spec, 0, steps)
        u0 = window_map.apply(window_map.zero_iterate())
        u1 = window_map.apply(u0)
        u2 = window_map.apply(u1)
        d1, d2 = u1.distance(u0), u2.distance(u1)
        ratio = d2 / d1 if d1 > 0 else 0.0
        trials.append({"window": steps * step, "iterate": 2, "d_n": d2, "ratio": ratio})
        logger.debug(f"trial window {steps * step:g}: ratio {ratio:.3f}")
        if ratio < TRIAL_RATIO:
            return WindowEstimate(steps * step, steps, ratio, tuple(trials))
        if steps // 2 < min_steps:
            raise NonConvergenceError(f"no trial window contracted down to {steps} step(s)", ratio_history=trials)
        steps //= 2
