"""Mild solution of the transport-free equation and its spatial gradient.

For one noise path the solution at a grid node ``t`` is assembled from
stored terms, always summed in the order of :data:`TERM_ORDER`:

* ``initial``: the heat flow of a window's starting state (zero at ``t = 0``);
* ``drift``: trapezoidal time sum of ``P_{t-r}`` applied to a frozen forcing;
* ``h``: left-endpoint time sum of ``P_{t-r} h(r)``, times the path's ``h2``;
* ``f``: left-endpoint Itô sum of ``P_{t-r} f(r)`` against Wiener increments;
* ``g``: exact jump sum of ``P_{t-tau} g(tau, ., v)`` minus the left-endpoint
  compensator sum.

Everything that does not depend on the path is computed once per
(``t``, coefficients, grids) by :class:`MildOperator`.
"""

import functools
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from numpy.typing import ArrayLike, NDArray
from scipy import integrate

from schauder_lab.errors import (
    DomainError,
    GridMismatchError,
    PreconditionError,
    UnsupportedFormError,
)
from schauder_lab.heat.heat_kernel import (
    GridSpec,
    apply_semigroup,
    convolve_gradient_subtracted,
    semigroup_gradient,
)
from schauder_lab.logging_config import get_logger
from schauder_lab.noise.levy_noise import (
    LevyMeasureSpec,
    NoisePath,
    TimeGrid,
    sample_jumps,
    sample_noise_path,
    wiener_matrix,
)
from schauder_lab.parallel import ordered_map
from schauder_lab.solution.fields import Coefficients

logger = get_logger(__name__)

TERM_ORDER = ("initial", "drift", "h", "f", "g")
# P_0 stands in for P_s with s below this; the gradient stencil is then the central difference.
TINY_TIME = float(np.finfo(float).tiny)

State = Tuple[NDArray[np.float64], NDArray[np.float64]]


def compose(terms: Dict[str, NDArray[np.float64]]) -> NDArray[np.float64]:
    """Sum stored terms node-wise in :data:`TERM_ORDER`."""
    total = terms[TERM_ORDER[0]].copy()
    for name in TERM_ORDER[1:]:
        total = total + terms[name]
    return total


def _flow(s: float, values: NDArray[np.float64], grid: GridSpec) -> State:
    """``P_s values`` and its gradient."""
    return apply_semigroup(s, values, grid), semigroup_gradient(max(s, TINY_TIME), values, grid)


@dataclass(frozen=True, eq=False)
class SolutionSample:
    time: float
    grid: GridSpec
    u: NDArray[np.float64]
    gradient: NDArray[np.float64]
    terms: Dict[str, NDArray[np.float64]]
    gradient_terms: Dict[str, NDArray[np.float64]]
    path: Optional[NoisePath] = None

    def __post_init__(self) -> None:
        if not (np.all(np.isfinite(self.u)) and np.all(np.isfinite(self.gradient))):
            raise DomainError(f"mild solution at t={self.time} has non-finite values")

    def to_frame(self) -> pd.DataFrame:
        """One row per node: coordinates, u, gradient components, term breakdown."""
        d = self.grid.dimension
        points = np.asarray(self.grid.points()).reshape(-1, d)
        columns: Dict[str, NDArray[np.float64]] = {}
        if d == 1:
            columns["x"] = points[:, 0]
        else:
            for i in range(d):
                columns[f"x{i + 1}"] = points[:, i]
        columns["u"] = self.u.reshape(-1)
        for i in range(d):
            columns[f"du_dx{i + 1}"] = self.gradient[i].reshape(-1)
        for name in TERM_ORDER:
            columns[f"term_{name}"] = self.terms[name].reshape(-1)
        return pd.DataFrame(columns)


class MildOperator:
    """Path-independent pieces of the mild map at node ``t`` for the window ``[a, t]``."""

    def __init__(
        self,
        t: float,
        coeffs: Coefficients,
        time_grid: TimeGrid,
        grid: GridSpec,
        spec: Optional[LevyMeasureSpec] = None,
        window_start: float = 0.0,
    ) -> None:
        if coeffs.g is not None and spec is None:
            raise PreconditionError("a jump coefficient needs a Lévy measure")
        self.t = float(t)
        self.coeffs = coeffs
        self.time_grid = time_grid
        self.grid = grid
        self.spec = spec
        self.stop = time_grid.index_of(t)
        self.start = time_grid.index_of(window_start)
        if self.start > self.stop:
            raise PreconditionError(f"window start {window_start} lies after t={t}")
        self.window_start = float(time_grid.nodes[self.start])

        shape, d = grid.shape, grid.dimension
        cells = self.stop - self.start
        self.h_sum: State = (np.zeros(shape), np.zeros((d,) + shape))
        self.compensator: State = (np.zeros(shape), np.zeros((d,) + shape))
        self.f_stack = np.zeros((cells,) + shape)
        self.f_gradient_stack = np.zeros((cells, d) + shape)
        nodes = time_grid.nodes
        for i, j in enumerate(range(self.start, self.stop)):
            r, dr = nodes[j], nodes[j + 1] - nodes[j]
            s = self.t - r
            if coeffs.h is not None:
                value, grad = _flow(s, coeffs.h.on_grid(r, grid), grid)
                self.h_sum = (self.h_sum[0] + dr * value, self.h_sum[1] + dr * grad)
            if coeffs.f is not None:
                self.f_stack[i], self.f_gradient_stack[i] = _flow(s, coeffs.f.on_grid(r, grid), grid)
            if coeffs.g is not None:
                value, grad = _flow(s, coeffs.g.compensator_grid(r, grid, spec), grid)
                self.compensator = (self.compensator[0] + dr * value, self.compensator[1] + dr * grad)

    def drift_term(self, forcing: Optional[Sequence[NDArray[np.float64]]]) -> State:
        shape, d = self.grid.shape, self.grid.dimension
        value, grad = np.zeros(shape), np.zeros((d,) + shape)
        if forcing is None:
            return value, grad
        if len(forcing) != self.stop - self.start + 1:
            raise PreconditionError(
                f"drift forcing needs {self.stop - self.start + 1} node values, got {len(forcing)}"
            )
        nodes = self.time_grid.nodes
        for i, j in enumerate(range(self.start, self.stop)):
            half = 0.5 * (nodes[j + 1] - nodes[j])
            for offset in (0, 1):
                flowed, flowed_grad = _flow(self.t - nodes[j + offset], forcing[i + offset], self.grid)
                value += half * flowed
                grad += half * flowed_grad
        return value, grad

    def _jumps(self, path: NoisePath) -> State:
        shape, d = self.grid.shape, self.grid.dimension
        value, grad = np.zeros(shape), np.zeros((d,) + shape)
        if self.coeffs.g is None:
            return value, grad
        jumps = path.jumps_in(self.window_start, self.t)
        for tau, mark in zip(jumps.times, jumps.marks):
            flowed, flowed_grad = _flow(self.t - tau, self.coeffs.g.jump_grid(tau, self.grid, mark), self.grid)
            value += flowed
            grad += flowed_grad
        return value - self.compensator[0], grad - self.compensator[1]

    def terms(
        self,
        path: NoisePath,
        initial: Optional[State] = None,
        forcing: Optional[Sequence[NDArray[np.float64]]] = None,
    ) -> Tuple[Dict[str, NDArray[np.float64]], Dict[str, NDArray[np.float64]]]:
        """Value and gradient terms for one path.

        ``initial`` is the (value, gradient) state at the window start;
        ``forcing`` holds the drift forcing at every window node up to ``t``.
        """
        if path.time_grid != self.time_grid:
            raise GridMismatchError("noise path and operator use different time grids")
        shape, d = self.grid.shape, self.grid.dimension
        if initial is None:
            start_state: State = (np.zeros(shape), np.zeros((d,) + shape))
        elif self.stop == self.start:
            start_state = (np.array(initial[0], dtype=float), np.array(initial[1], dtype=float))
        else:
            start_state = (
                apply_semigroup(self.t - self.window_start, initial[0], self.grid),
                semigroup_gradient(self.t - self.window_start, initial[0], self.grid),
            )
        h2 = self.coeffs.h_factor.sample(path.master_seed, path.path_index)
        increments = path.wiener_increments[self.start : self.stop]
        drift = self.drift_term(forcing)
        jumps = self._jumps(path)
        values = {
            "initial": start_state[0],
            "drift": drift[0],
            "h": h2 * self.h_sum[0],
            "f": np.tensordot(increments, self.f_stack, axes=1),
            "g": jumps[0],
        }
        gradients = {
            "initial": start_state[1],
            "drift": drift[1],
            "h": h2 * self.h_sum[1],
            "f": np.tensordot(increments, self.f_gradient_stack, axes=1),
            "g": jumps[1],
        }
        return values, gradients

    def sample(
        self,
        path: NoisePath,
        initial: Optional[State] = None,
        forcing: Optional[Sequence[NDArray[np.float64]]] = None,
    ) -> SolutionSample:
        values, gradients = self.terms(path, initial, forcing)
        return SolutionSample(
            time=self.t,
            grid=self.grid,
            u=compose(values),
            gradient=compose(gradients),
            terms=values,
            gradient_terms=gradients,
            path=path,
        )


@functools.lru_cache(maxsize=16)
def mild_operator(
    t: float,
    coeffs: Coefficients,
    time_grid: TimeGrid,
    grid: GridSpec,
    spec: Optional[LevyMeasureSpec] = None,
    window_start: float = 0.0,
) -> MildOperator:
    return MildOperator(t, coeffs, time_grid, grid, spec, window_start)


def evaluate_mild(
    t: float,
    coeffs: Coefficients,
    path: NoisePath,
    grid: GridSpec,
    spec: Optional[LevyMeasureSpec] = None,
) -> SolutionSample:
    """Mild solution at the time node ``t`` for one path, with zero initial data and ``b = 0``."""
    if coeffs.has_drift:
        raise PreconditionError("evaluate_mild handles b = 0; use solve_with_drift for transport")
    return mild_operator(float(t), coeffs, path.time_grid, grid, spec).sample(path)


def evaluate_gradient(
    t: float,
    coeffs: Coefficients,
    path: NoisePath,
    grid: GridSpec,
    spec: Optional[LevyMeasureSpec] = None,
) -> NDArray[np.float64]:
    """``grad u(t)`` on the grid, shape ``(d, *grid.shape)``."""
    return evaluate_mild(t, coeffs, path, grid, spec).gradient


def sample_solutions(
    t: float,
    coeffs: Coefficients,
    time_grid: TimeGrid,
    grid: GridSpec,
    spec: Optional[LevyMeasureSpec],
    master_seed: int,
    indices: Sequence[int],
) -> List[SolutionSample]:
    """Solutions for several paths, in path-index order."""
    operator = mild_operator(float(t), coeffs, time_grid, grid, spec)
    return ordered_map(
        lambda index: operator.sample(sample_noise_path(time_grid, spec, master_seed, index)),
        indices,
    )


# -- pointwise gradients -----------------------------------------------------


def _require_separable(coeffs: Coefficients) -> None:
    if coeffs.g is not None and not getattr(coeffs.g, "separable", False):
        raise UnsupportedFormError("only separable jump coefficients phi(t, x) psi(v) are supported")


class PointGradient:
    """``grad u(t, x)`` at fixed anchors for many paths.

    The kernel weights ``int dK(t - r, x - z) [field(r, z) - field(r, x)] dz``
    do not depend on the path; they are computed once by anchor quadrature
    at every left endpoint ``r`` and then combined with each path's
    increments, jumps and ``h2``.
    """

    def __init__(
        self,
        t: float,
        points: ArrayLike,
        coeffs: Coefficients,
        time_grid: TimeGrid,
        grid: GridSpec,
        spec: Optional[LevyMeasureSpec] = None,
    ) -> None:
        if coeffs.has_drift:
            raise PreconditionError("pointwise gradients handle b = 0 only")
        _require_separable(coeffs)
        if coeffs.g is not None and spec is None:
            raise PreconditionError("a jump coefficient needs a Lévy measure")
        self.t = float(t)
        self.coeffs = coeffs
        self.time_grid = time_grid
        self.grid = grid
        self.spec = spec
        self.anchors = np.asarray(points, dtype=float).reshape(-1, grid.dimension)
        self.stop = time_grid.index_of(t)

        nodes = time_grid.nodes
        count, d = self.anchors.shape
        self.f_weights = np.zeros((self.stop, count, d))
        self.phi_compensator = np.zeros((count, d))
        self.h_weights = np.zeros((count, d))
        self.rate = coeffs.g.psi.mean(spec) if coeffs.g is not None else 0.0
        for j in range(self.stop):
            r, dr = nodes[j], nodes[j + 1] - nodes[j]
            s = self.t - r
            if coeffs.f is not None and not coeffs.f.constant:
                self.f_weights[j] = self._weights(s, coeffs.f.at(r))
            if coeffs.g is not None and not coeffs.g.phi.constant:
                self.phi_compensator += dr * self._weights(s, coeffs.g.phi.at(r))
            if coeffs.h is not None and not coeffs.h.constant:
                self.h_weights += dr * self._weights(s, coeffs.h.at(r))

    def _weights(self, s: float, field_slice) -> NDArray[np.float64]:
        return np.array(
            [convolve_gradient_subtracted(s, anchor, field_slice, self.grid) for anchor in self.anchors]
        )

    def _jump_weights(self, master_seed: int, index: int) -> NDArray[np.float64]:
        total = np.zeros(self.anchors.shape)
        jumps = sample_jumps(self.time_grid.horizon, self.spec, (master_seed, index))
        phi = self.coeffs.g.phi
        for tau, mark in zip(jumps.times, jumps.marks):
            if tau > self.t or phi.constant:
                continue
            total += float(self.coeffs.g.psi(mark)) * self._weights(max(self.t - tau, TINY_TIME), phi.at(tau))
        return total - self.rate * self.phi_compensator

    def sample(self, master_seed: int, indices: Sequence[int]) -> NDArray[np.float64]:
        """Gradients of shape ``(len(indices), anchors, d)`` in path-index order."""
        increments = wiener_matrix(self.time_grid, master_seed, indices)[:, : self.stop]
        out = np.einsum("mj,jpd->mpd", increments, self.f_weights)
        if self.coeffs.g is not None:
            out += np.stack(ordered_map(lambda i: self._jump_weights(master_seed, i), indices))
        if self.coeffs.h is not None:
            factors = np.array([self.coeffs.h_factor.sample(master_seed, i) for i in indices])
            out += factors[:, None, None] * self.h_weights[None, :, :]
        return out


def gradient_at(
    t: float,
    points: ArrayLike,
    coeffs: Coefficients,
    time_grid: TimeGrid,
    grid: GridSpec,
    spec: Optional[LevyMeasureSpec],
    master_seed: int,
    indices: Sequence[int],
) -> NDArray[np.float64]:
    """``grad u(t, x)`` at arbitrary anchors for the given paths."""
    return PointGradient(t, points, coeffs, time_grid, grid, spec).sample(master_seed, indices)


# -- p = 2 isometry pathway --------------------------------------------------

QUAD_OPTIONS = {"epsabs": 1e-14, "epsrel": 1e-9, "limit": 200}


def _bracket(s: float, field, t: float, x: NDArray[np.float64], y: Optional[NDArray[np.float64]], grid: GridSpec):
    snapshot = field.at(t - s)
    value = np.asarray(convolve_gradient_subtracted(s, x, snapshot, grid))
    if y is not None:
        value = value - np.asarray(convolve_gradient_subtracted(s, y, snapshot, grid))
    return value


def _breakpoints(field, t: float, x: NDArray[np.float64], y: Optional[NDArray[np.float64]]) -> List[float]:
    """Transition scales in ``u = sqrt(s/t)``: the pair distance and the distances to kinks."""
    scales = []
    if y is not None:
        scales.append(float(np.linalg.norm(x - y)))
    for axis, kinks in enumerate(field.kinks):
        for kink in kinks:
            scales.extend(abs(p[axis] - kink) for p in (x, y) if p is not None)
    root = math.sqrt(t)
    return sorted({scale / root for scale in scales if 0 < scale < root})


def _increment_energy(field, t, x, y, grid) -> float:
    """``int_0^t |bracket(s)|^2 ds`` with ``s = t u^2``."""
    if field.constant:
        return 0.0
    integrand = lambda u: float(np.sum(_bracket(t * u * u, field, t, x, y, grid) ** 2)) * 2.0 * t * u
    value, _ = integrate.quad(integrand, 0.0, 1.0, points=_breakpoints(field, t, x, y) or None, **QUAD_OPTIONS)
    return float(value)


def _increment_drift(field, t, x, y, grid) -> NDArray[np.float64]:
    """``int_0^t bracket(s) ds`` per component."""
    if field.constant:
        return np.zeros(grid.dimension)
    points = _breakpoints(field, t, x, y) or None
    return np.array(
        [
            integrate.quad(
                lambda u: float(_bracket(t * u * u, field, t, x, y, grid)[i]) * 2.0 * t * u,
                0.0,
                1.0,
                points=points,
                **QUAD_OPTIONS,
            )[0]
            for i in range(grid.dimension)
        ]
    )


def second_moment_p2(
    t: float,
    x: ArrayLike,
    y: Optional[ArrayLike],
    coeffs: Coefficients,
    grid: GridSpec,
    spec: Optional[LevyMeasureSpec] = None,
) -> float:
    """``E |grad u(t, x) - grad u(t, y)|^2`` by the Itô and Poisson isometries.

    With ``y = None`` this is ``E |grad u(t, x)|^2``. The h term enters as
    ``E[h2^2]`` times the squared deterministic increment of ``grad int P h``.
    """
    if not t > 0:
        raise DomainError(f"time must be positive, got t={t}")
    if coeffs.has_drift:
        raise PreconditionError("the isometry pathway handles b = 0 only")
    _require_separable(coeffs)
    if coeffs.g is not None and spec is None:
        raise PreconditionError("a jump coefficient needs a Lévy measure")
    x = np.asarray(x, dtype=float).reshape(grid.dimension)
    y = None if y is None else np.asarray(y, dtype=float).reshape(grid.dimension)
    if y is not None and np.array_equal(x, y):
        return 0.0
    total = 0.0
    if coeffs.f is not None:
        total += _increment_energy(coeffs.f, t, x, y, grid)
    if coeffs.g is not None:
        total += coeffs.g.psi.squared_norm(spec) * _increment_energy(coeffs.g.phi, t, x, y, grid)
    if coeffs.h is not None:
        increment = _increment_drift(coeffs.h, t, x, y, grid)
        total += coeffs.h_factor.second_moment() * float(np.dot(increment, increment))
    return total


def moment_bound_p2(t: float, coeffs: Coefficients, spec: Optional[LevyMeasureSpec] = None) -> float:
    """Sup-norm bound ``E[h2^2] (t |h|)^2 + t |f|^2 + t |phi|^2 int psi^2 d nu`` on ``E |u(t, x)|^2``."""
    if coeffs.has_drift:
        raise PreconditionError("the p = 2 moment bound handles b = 0 only")
    _require_separable(coeffs)
    bound = 0.0
    if coeffs.h is not None:
        bound += coeffs.h_factor.second_moment() * (t * coeffs.h.sup_norm) ** 2
    if coeffs.f is not None:
        bound += t * coeffs.f.sup_norm**2
    if coeffs.g is not None:
        bound += t * coeffs.g.phi.sup_norm**2 * coeffs.g.psi.squared_norm(spec)
    return bound
