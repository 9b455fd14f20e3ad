"""Gaussian heat kernel, its gradient, and the heat semigroup on gridded fields.

Two quadrature engines live here:

* the grid engine (:func:`apply_semigroup`, :func:`semigroup_gradient`) acts on
  whole fields sampled at the nodes of a :class:`GridSpec`, with discrete
  Gaussian stencils applied axis by axis;
* the anchor engine (:func:`convolve_at`, :func:`convolve_gradient_subtracted`
  for callable fields) integrates against the kernel at a single point with
  panel Gauss-Legendre quadrature in the scaled variable ``w = (z - x)/sqrt(t)``,
  refined at the kinks the field declares.

Both extend fields beyond the box by their boundary value.
"""

import functools
import math
from dataclasses import dataclass
from typing import Any, Callable, Dict, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import ndimage

from schauder_lab.errors import DomainError, GridMismatchError
from schauder_lab.logging_config import get_logger

logger = get_logger(__name__)

# Contributions with |x - y| > TRUNCATION_WIDTH * sqrt(t) are dropped.
TRUNCATION_WIDTH = 8.0
# The box half-width must cover HORIZON_MARGIN * sqrt(T_max).
HORIZON_MARGIN = 6.0
SUPPORTED_DIMENSIONS = (1, 2)

FieldLike = Union[NDArray[np.float64], Callable[[NDArray[np.float64]], NDArray[np.float64]]]


def _check_time(t: float) -> None:
    if not t > 0:
        raise DomainError(f"kernel time must be positive, got t={t}")


def _check_dimension(d: int) -> None:
    if d not in SUPPORTED_DIMENSIONS:
        raise DomainError(f"dimension must be one of {SUPPORTED_DIMENSIONS}, got d={d}")


@dataclass(frozen=True)
class GridSpec:
    """Uniform cell-centred grid on the box [-L, L]^d.

    Node ``j`` sits at ``(j - (n - 1)/2) * dx`` with ``dx = 2L/n``, so the origin
    is a node whenever ``n`` is odd.
    """

    dimension: int
    half_width: float
    nodes_per_axis: int

    def __post_init__(self) -> None:
        _check_dimension(self.dimension)
        if not self.half_width > 0:
            raise DomainError(f"half_width must be positive, got {self.half_width}")
        if self.nodes_per_axis < 3 or self.nodes_per_axis % 2 == 0:
            raise DomainError(
                f"nodes_per_axis must be odd and at least 3, got {self.nodes_per_axis}"
            )

    @classmethod
    def from_spacing(cls, dimension: int, half_width: float, spacing: float) -> "GridSpec":
        """Build a grid from its spacing; ``2L/dx`` must be an odd integer."""
        if not spacing > 0:
            raise DomainError(f"spacing must be positive, got {spacing}")
        count = int(round(2.0 * half_width / spacing))
        if abs(count * spacing - 2.0 * half_width) > 1e-9 * half_width:
            raise DomainError(f"2L/dx = {2.0 * half_width / spacing} is not an integer")
        return cls(dimension=dimension, half_width=half_width, nodes_per_axis=count)

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / self.nodes_per_axis

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.nodes_per_axis,) * self.dimension

    @property
    def extent(self) -> float:
        """Coordinate of the outermost node along each axis."""
        return 0.5 * (self.nodes_per_axis - 1) * self.spacing

    @property
    def axis(self) -> NDArray[np.float64]:
        n = self.nodes_per_axis
        return (np.arange(n) - 0.5 * (n - 1)) * self.spacing

    def points(self) -> NDArray[np.float64]:
        """Node coordinates: shape (n,) for d = 1, (n, n, 2) for d = 2."""
        if self.dimension == 1:
            return self.axis
        return np.stack(np.meshgrid(self.axis, self.axis, indexing="ij"), axis=-1)

    def covers_horizon(self, t_max: float) -> bool:
        return self.half_width >= HORIZON_MARGIN * math.sqrt(max(t_max, 0.0))

    def interior_mask(self, margin: float) -> NDArray[np.bool_]:
        """Nodes whose distance to the box boundary is at least ``margin``."""
        inside_axis = np.abs(self.axis) <= self.half_width - margin
        if self.dimension == 1:
            return inside_axis
        return np.logical_and.outer(inside_axis, inside_axis)

    def node_index(self, point: ArrayLike) -> Tuple[int, ...]:
        """Index of the node at ``point``; raises when ``point`` is not a node."""
        coords = np.atleast_1d(np.asarray(point, dtype=float)).reshape(-1)
        if coords.size != self.dimension:
            raise GridMismatchError(
                f"point {coords.tolist()} does not have dimension {self.dimension}"
            )
        raw = coords / self.spacing + 0.5 * (self.nodes_per_axis - 1)
        index = np.rint(raw).astype(int)
        if np.any(np.abs(raw - index) > 1e-6) or np.any(index < 0) or np.any(
            index >= self.nodes_per_axis
        ):
            raise GridMismatchError(f"point {coords.tolist()} is not a grid node")
        return tuple(int(i) for i in index)

    def clip(self, points: ArrayLike) -> NDArray[np.float64]:
        """Project coordinates onto the node box (constant extrapolation)."""
        return np.clip(np.asarray(points, dtype=float), -self.extent, self.extent)

    def validate_field(self, field: ArrayLike) -> NDArray[np.float64]:
        values = np.asarray(field, dtype=float)
        if values.shape != self.shape:
            raise GridMismatchError(f"field shape {values.shape} does not match grid {self.shape}")
        return values

    def to_dict(self) -> Dict[str, Any]:
        return {
            "dimension": self.dimension,
            "half_width": self.half_width,
            "nodes_per_axis": self.nodes_per_axis,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "GridSpec":
        if "spacing" in data and "nodes_per_axis" not in data:
            return cls.from_spacing(
                int(data["dimension"]), float(data["half_width"]), float(data["spacing"])
            )
        return cls(
            dimension=int(data["dimension"]),
            half_width=float(data["half_width"]),
            nodes_per_axis=int(data["nodes_per_axis"]),
        )


def _squared_norm(x: ArrayLike, d: int) -> NDArray[np.float64]:
    points = np.asarray(x, dtype=float)
    if d == 1:
        if points.ndim >= 1 and points.shape[-1] == 1:
            points = points[..., 0]
        return points * points
    if points.ndim == 0 or points.shape[-1] != d:
        raise DomainError(f"points must have a trailing axis of length {d}")
    return np.sum(points * points, axis=-1)


def kernel(t: float, x: ArrayLike, d: int) -> Union[float, NDArray[np.float64]]:
    """Gaussian heat kernel ``(2 pi t)^(-d/2) exp(-|x|^2 / 2t)``.

    For ``d = 1`` every entry of ``x`` is a coordinate; for ``d = 2`` points
    carry a trailing axis of length 2.
    """
    _check_time(t)
    _check_dimension(d)
    value = (2.0 * math.pi * t) ** (-0.5 * d) * np.exp(-_squared_norm(x, d) / (2.0 * t))
    return float(value) if np.ndim(value) == 0 else value


def kernel_gradient(t: float, x: ArrayLike) -> NDArray[np.float64]:
    """Spatial gradient ``-(x/t) K(t, x)``; points carry a trailing axis of length d."""
    _check_time(t)
    points = np.atleast_1d(np.asarray(x, dtype=float))
    d = points.shape[-1]
    _check_dimension(d)
    value = np.asarray(kernel(t, points, d))
    return -(points / t) * value[..., None]


@dataclass(frozen=True)
class KernelEval:
    time: float
    center: Tuple[float, ...]
    value: float
    gradient: Tuple[float, ...]

    @classmethod
    def at(cls, t: float, x: ArrayLike) -> "KernelEval":
        point = np.atleast_1d(np.asarray(x, dtype=float)).reshape(-1)
        value = float(kernel(t, point, point.size))
        gradient = kernel_gradient(t, point)
        return cls(
            time=t,
            center=tuple(float(c) for c in point),
            value=value,
            gradient=tuple(float(g) for g in gradient),
        )


# -- grid engine -------------------------------------------------------------


def _stencil_half_width(t: float, spacing: float) -> int:
    return max(1, int(math.ceil(TRUNCATION_WIDTH * math.sqrt(t) / spacing)))


@functools.lru_cache(maxsize=4096)
def smoothing_stencil(t: float, spacing: float) -> NDArray[np.float64]:
    """Normalized discrete Gaussian weights over offsets ``-K..K``."""
    half = _stencil_half_width(t, spacing)
    offsets = np.arange(-half, half + 1) * spacing
    weights = np.exp(-(offsets * offsets) / (2.0 * t))
    weights /= weights.sum()
    weights.setflags(write=False)
    return weights


@functools.lru_cache(maxsize=4096)
def gradient_stencil(t: float, spacing: float) -> NDArray[np.float64]:
    """Discrete derivative-of-Gaussian weights over offsets ``-K..K``.

    Normalized so that ``sum_k w_k * (k dx) = 1``: linear fields are
    differentiated exactly, and for ``t << dx^2`` the stencil is the central
    difference.
    """
    half = _stencil_half_width(t, spacing)
    k = np.arange(-half, half + 1)
    weights = np.zeros(k.size)
    nonzero = k != 0
    kk = k[nonzero].astype(float)
    # relative to the nearest neighbours so small t does not underflow them
    shape = np.exp(-((kk * kk - 1.0) * spacing * spacing) / (2.0 * t))
    weights[nonzero] = kk * shape / (spacing * np.sum(kk * kk * shape))
    weights.setflags(write=False)
    return weights


def _smooth_axes(values: NDArray[np.float64], weights: NDArray[np.float64], axes: Sequence[int]):
    out = values
    for axis in axes:
        out = ndimage.correlate1d(out, weights, axis=axis, mode="nearest")
    return out


def _subtracted_correlate(
    values: NDArray[np.float64], weights: NDArray[np.float64], axis: int
) -> NDArray[np.float64]:
    """``sum_k w_k [v(x + k e_axis) - v(x)]`` with edge extension."""
    half = (weights.size - 1) // 2
    moved = np.moveaxis(values, axis, -1)
    n = moved.shape[-1]
    padded = np.pad(moved, [(0, 0)] * (moved.ndim - 1) + [(half, half)], mode="edge")
    acc = np.zeros_like(moved)
    for j, weight in enumerate(weights):
        if weight == 0.0:
            continue
        acc += weight * (padded[..., j : j + n] - moved)
    return np.moveaxis(acc, -1, axis)


def apply_semigroup(t: float, field: ArrayLike, grid: GridSpec) -> NDArray[np.float64]:
    """Heat semigroup ``P_t`` applied node-wise to a gridded field."""
    values = grid.validate_field(field)
    if t < 0:
        raise DomainError(f"semigroup time must be nonnegative, got t={t}")
    if t == 0:
        return values.copy()
    return _smooth_axes(values, smoothing_stencil(float(t), grid.spacing), range(grid.dimension))


def semigroup_gradient(t: float, field: ArrayLike, grid: GridSpec) -> NDArray[np.float64]:
    """Gradient of ``P_t field`` in subtracted form; shape ``(d, *grid.shape)``.

    In d = 2 the cross axis is smoothed first, then the derivative stencil
    acts on differences along the differentiated axis.
    """
    values = grid.validate_field(field)
    _check_time(t)
    smooth_w = smoothing_stencil(float(t), grid.spacing)
    grad_w = gradient_stencil(float(t), grid.spacing)
    components = []
    for axis in range(grid.dimension):
        cross = [other for other in range(grid.dimension) if other != axis]
        smoothed = _smooth_axes(values, smooth_w, cross)
        components.append(_subtracted_correlate(smoothed, grad_w, axis))
    return np.stack(components)


# -- anchor engine -----------------------------------------------------------

BASE_PANELS = 16
KINK_REFINEMENT = 12
PANEL_ORDER = 16


@functools.lru_cache(maxsize=8)
def _legendre(order: int) -> Tuple[NDArray[np.float64], NDArray[np.float64]]:
    return np.polynomial.legendre.leggauss(order)


def _axis_rule(
    center: float, scale: float, kinks: Sequence[float], extent: float, refinement: int
) -> Tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Nodes and Gaussian-weighted weights in ``w`` for one axis.

    Panels on [-8, 8] are split at every kink ``k`` (at ``w = (k - center)/scale``)
    and graded geometrically towards it; the box edges count as kinks.
    """
    breaks = [np.linspace(-TRUNCATION_WIDTH, TRUNCATION_WIDTH, BASE_PANELS + 1)]
    panel = 2.0 * TRUNCATION_WIDTH / BASE_PANELS
    for kink in list(kinks) + [-extent, extent]:
        w0 = (kink - center) / scale
        if -TRUNCATION_WIDTH < w0 < TRUNCATION_WIDTH:
            steps = panel * 2.0 ** -np.arange(1, refinement + 1)
            breaks.append(np.concatenate(([w0], w0 - steps, w0 + steps)))
    edges = np.unique(np.clip(np.concatenate(breaks), -TRUNCATION_WIDTH, TRUNCATION_WIDTH))
    lower, upper = edges[:-1], edges[1:]
    xi, omega = _legendre(PANEL_ORDER)
    half = 0.5 * (upper - lower)
    nodes = (lower[:, None] + half[:, None] * (xi[None, :] + 1.0)).reshape(-1)
    weights = (half[:, None] * omega[None, :]).reshape(-1)
    weights = weights * np.exp(-0.5 * nodes * nodes) / math.sqrt(2.0 * math.pi)
    return nodes, weights


def _field_kinks(field: Any, dimension: int) -> Tuple[Tuple[float, ...], ...]:
    kinks = getattr(field, "kinks", None)
    if not kinks:
        return ((),) * dimension
    return tuple(tuple(axis_kinks) for axis_kinks in kinks)


def _anchor_rule(t: float, anchor: ArrayLike, field: Any, grid: GridSpec):
    point = np.atleast_1d(np.asarray(anchor, dtype=float)).reshape(-1)
    if point.size != grid.dimension:
        raise GridMismatchError(f"anchor {point.tolist()} does not have dimension {grid.dimension}")
    scale = math.sqrt(t)
    kinks = _field_kinks(field, grid.dimension)
    refinement = KINK_REFINEMENT if grid.dimension == 1 else KINK_REFINEMENT // 2
    rules = [
        _axis_rule(point[a], scale, kinks[a], grid.extent, refinement)
        for a in range(grid.dimension)
    ]
    if grid.dimension == 1:
        offsets, weights = rules[0]
        samples = grid.clip(point[0] + scale * offsets)
        return point, scale, offsets[:, None], weights, samples, grid.clip(point[0])
    (w0, a0), (w1, a1) = rules
    g0, g1 = np.meshgrid(w0, w1, indexing="ij")
    offsets = np.stack([g0.reshape(-1), g1.reshape(-1)], axis=-1)
    weights = np.outer(a0, a1).reshape(-1)
    samples = grid.clip(point[None, :] + scale * offsets)
    return point, scale, offsets, weights, samples, grid.clip(point)


def convolve_at(t: float, anchor: ArrayLike, field: FieldLike, grid: GridSpec) -> float:
    """``P_t field`` at a single anchor point."""
    if t < 0:
        raise DomainError(f"semigroup time must be nonnegative, got t={t}")
    if not callable(field):
        values = apply_semigroup(t, field, grid)
        return float(values[grid.node_index(anchor)])
    if t == 0:
        point = np.atleast_1d(np.asarray(anchor, dtype=float)).reshape(-1)
        return float(np.asarray(field(grid.clip(point[0] if grid.dimension == 1 else point))))
    _, _, _, weights, samples, _ = _anchor_rule(t, anchor, field, grid)
    return float(np.dot(weights, field(samples)))


def convolve_gradient_subtracted(
    t: float,
    anchor: ArrayLike,
    field: FieldLike,
    grid: GridSpec,
    component: Optional[int] = None,
) -> Union[float, NDArray[np.float64]]:
    """``int d_i K(t, x - z) [field(z) - field(x)] dz`` at the anchor ``x``.

    Callable fields use the anchor engine; gridded arrays use the grid engine
    and require the anchor to be a node. Returns all ``d`` components, or the
    requested one.
    """
    _check_time(t)
    if not callable(field):
        gradient = semigroup_gradient(t, field, grid)
        values = gradient[(slice(None),) + grid.node_index(anchor)]
    else:
        _, scale, offsets, weights, samples, center = _anchor_rule(t, anchor, field, grid)
        differences = field(samples) - field(center)
        values = np.array(
            [np.dot(weights * offsets[:, i], differences) / scale for i in range(grid.dimension)]
        )
    if component is None:
        return values
    return float(values[component])
