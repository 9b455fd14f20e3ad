"""Coefficient fields of the transport-diffusion equation.

A :class:`HolderField` pairs a vectorized evaluator with the Hölder data the
theory needs (exponent, seminorm, sup-norm) and with the kinks where it is
not smooth, which the anchor quadrature refines towards. Fields are built
from named families so configurations can describe them as JSON.
"""

import math
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
from numpy.typing import ArrayLike, NDArray

from schauder_lab.errors import DomainError
from schauder_lab.heat.heat_kernel import GridSpec
from schauder_lab.logging_config import get_logger
from schauder_lab.noise.levy_noise import LevyMeasureSpec
from schauder_lab.noise.streams import stream

logger = get_logger(__name__)

Evaluator = Callable[[float, NDArray[np.float64]], NDArray[np.float64]]

DIAGNOSTIC_PAIRS = 1000


def _coordinate(points: ArrayLike, axis: int, dimension: int) -> NDArray[np.float64]:
    values = np.asarray(points, dtype=float)
    if dimension == 1:
        return values
    return values[..., axis]


def _smooth_seminorm(sup_norm: float, lipschitz: float, exponent: float) -> float:
    """Hölder constant of a bounded Lipschitz function: ``(2 sup)^(1-a) Lip^a``."""
    if exponent >= 1.0:
        return lipschitz
    return (2.0 * sup_norm) ** (1.0 - exponent) * lipschitz**exponent


@dataclass(frozen=True)
class FieldSlice:
    """A field frozen at one time; callable on points and carrying its kinks."""

    source: "HolderField"
    time: float

    @property
    def kinks(self) -> Tuple[Tuple[float, ...], ...]:
        return self.source.kinks

    def __call__(self, points: ArrayLike) -> NDArray[np.float64]:
        return self.source(self.time, points)


@dataclass(frozen=True, eq=False)
class HolderField:
    name: str
    evaluator: Evaluator
    exponent: float
    seminorm: float
    sup_norm: float
    dimension: int = 1
    kinks: Tuple[Tuple[float, ...], ...] = ()
    constant: bool = False
    spec: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not 0 < self.exponent <= 1:
            raise DomainError(f"Hölder exponent of {self.name} must lie in (0, 1], got {self.exponent}")
        if not self.kinks:
            object.__setattr__(self, "kinks", ((),) * self.dimension)

    def __call__(self, t: float, points: ArrayLike) -> NDArray[np.float64]:
        values = np.asarray(self.evaluator(t, np.asarray(points, dtype=float)), dtype=float)
        shape = np.shape(points) if self.dimension == 1 else np.shape(points)[:-1]
        return np.broadcast_to(values, shape).astype(float, copy=False)

    @property
    def is_zero(self) -> bool:
        return self.constant and self.sup_norm == 0.0

    def at(self, t: float) -> FieldSlice:
        return FieldSlice(self, float(t))

    def on_grid(self, t: float, grid: GridSpec) -> NDArray[np.float64]:
        if grid.dimension != self.dimension:
            raise DomainError(
                f"field {self.name} has dimension {self.dimension}, grid has {grid.dimension}"
            )
        return np.array(self(t, grid.points()), dtype=float)

    def with_declared(self, seminorm: Optional[float] = None, sup_norm: Optional[float] = None) -> "HolderField":
        return replace(
            self,
            seminorm=self.seminorm if seminorm is None else float(seminorm),
            sup_norm=self.sup_norm if sup_norm is None else float(sup_norm),
        )

    def check_declared(
        self, grid: GridSpec, t: float = 0.0, pairs: int = DIAGNOSTIC_PAIRS, seed: int = 0
    ) -> List[str]:
        """Compare the declared norms with the grid max and a sampled seminorm.

        Half of the pairs are drawn uniformly over the grid and half as near
        neighbours along the first axis, where a low exponent shows up.
        """
        values = self.on_grid(t, grid).reshape(-1)
        points = np.asarray(grid.points(), dtype=float).reshape(values.size, grid.dimension)
        violations = []
        grid_max = float(np.max(np.abs(values)))
        if grid_max > self.sup_norm * (1.0 + 1e-12):
            violations.append(
                f"{self.name}: grid max {grid_max:.6g} exceeds declared sup-norm {self.sup_norm:.6g}"
            )
        rng = np.random.default_rng(seed)
        first = rng.integers(0, values.size, size=pairs)
        far = rng.integers(0, values.size, size=pairs // 2)
        stride = grid.nodes_per_axis ** (grid.dimension - 1)
        near = np.clip(first[pairs // 2 :] + stride * rng.integers(1, 17, size=pairs - pairs // 2), 0, values.size - 1)
        second = np.concatenate((far, near))
        distance = np.linalg.norm(points[first] - points[second], axis=-1)
        usable = distance > 0
        ratio = np.abs(values[first] - values[second])[usable] / distance[usable] ** self.exponent
        empirical = float(np.max(ratio)) if ratio.size else 0.0
        if empirical > self.seminorm * (1.0 + 1e-9):
            violations.append(
                f"{self.name}: sampled seminorm {empirical:.6g} exceeds declared {self.seminorm:.6g}"
            )
        for message in violations:
            logger.warning(f"Declared norm understated: {message}")
        return violations


# -- families ----------------------------------------------------------------


def constant_field(value: float = 0.0, dimension: int = 1, exponent: float = 1.0, name: str = "constant") -> HolderField:
    value = float(value)
    return HolderField(
        name=name,
        evaluator=lambda t, x: np.float64(value),
        exponent=exponent,
        seminorm=0.0,
        sup_norm=abs(value),
        dimension=dimension,
        constant=True,
        spec={"family": "constant", "value": value},
    )


def linear_field(slope: float = 1.0, axis: int = 0, dimension: int = 1, name: str = "linear") -> HolderField:
    """``slope * x_axis``; unbounded, so only the grid engine and the Lipschitz seminorm apply."""
    return HolderField(
        name=name,
        evaluator=lambda t, x: slope * _coordinate(x, axis, dimension),
        exponent=1.0,
        seminorm=abs(slope),
        sup_norm=math.inf,
        dimension=dimension,
        spec={"family": "linear", "slope": slope, "axis": axis},
    )


def capped_power_field(
    alpha: float, scale: float = 1.0, shift: float = 0.0, axis: int = 0, dimension: int = 1, name: str = "capped_power"
) -> HolderField:
    """``scale * min((x_axis - shift)_+^alpha, 1)``: nondecreasing, exactly alpha-Hölder at ``shift``."""

    def evaluate(t: float, x: NDArray[np.float64]) -> NDArray[np.float64]:
        z = np.maximum(_coordinate(x, axis, dimension) - shift, 0.0)
        return scale * np.minimum(z**alpha, 1.0)

    kinks = [()] * dimension
    kinks[axis] = (shift, shift + 1.0)
    return HolderField(
        name=name,
        evaluator=evaluate,
        exponent=alpha,
        seminorm=abs(scale),
        sup_norm=abs(scale),
        dimension=dimension,
        kinks=tuple(kinks),
        spec={"family": "capped_power", "alpha": alpha, "scale": scale, "shift": shift, "axis": axis},
    )


def symmetric_capped_power_field(
    alpha: float, scale: float = 1.0, axis: int = 0, dimension: int = 1, name: str = "symmetric_capped_power"
) -> HolderField:
    """``scale * min(|x_axis|^alpha, 1)``."""

    def evaluate(t: float, x: NDArray[np.float64]) -> NDArray[np.float64]:
        return scale * np.minimum(np.abs(_coordinate(x, axis, dimension)) ** alpha, 1.0)

    kinks = [()] * dimension
    kinks[axis] = (-1.0, 0.0, 1.0)
    return HolderField(
        name=name,
        evaluator=evaluate,
        exponent=alpha,
        seminorm=abs(scale),
        sup_norm=abs(scale),
        dimension=dimension,
        kinks=tuple(kinks),
        spec={"family": "symmetric_capped_power", "alpha": alpha, "scale": scale, "axis": axis},
    )


def gaussian_bump_field(
    amplitude: float = 1.0,
    width: float = 1.0,
    center: float = 0.0,
    exponent: float = 1.0,
    dimension: int = 1,
    name: str = "gaussian_bump",
) -> HolderField:
    """``amplitude * exp(-|x - center|^2 / (2 width^2))``, radial in d = 2."""
    if not width > 0:
        raise DomainError(f"bump width must be positive, got {width}")

    def evaluate(t: float, x: NDArray[np.float64]) -> NDArray[np.float64]:
        offset = np.asarray(x, dtype=float) - center
        squared = offset * offset if dimension == 1 else np.sum(offset * offset, axis=-1)
        return amplitude * np.exp(-squared / (2.0 * width * width))

    sup_norm = abs(amplitude)
    lipschitz = sup_norm * math.exp(-0.5) / width
    return HolderField(
        name=name,
        evaluator=evaluate,
        exponent=exponent,
        seminorm=_smooth_seminorm(sup_norm, lipschitz, exponent),
        sup_norm=sup_norm,
        dimension=dimension,
        spec={"family": "gaussian_bump", "amplitude": amplitude, "width": width, "center": center, "exponent": exponent},
    )


def sine_field(
    amplitude: float = 1.0,
    frequency: float = 1.0,
    axis: int = 0,
    exponent: float = 1.0,
    dimension: int = 1,
    name: str = "sine",
) -> HolderField:
    sup_norm = abs(amplitude)
    return HolderField(
        name=name,
        evaluator=lambda t, x: amplitude * np.sin(frequency * _coordinate(x, axis, dimension)),
        exponent=exponent,
        seminorm=_smooth_seminorm(sup_norm, sup_norm * abs(frequency), exponent),
        sup_norm=sup_norm,
        dimension=dimension,
        spec={"family": "sine", "amplitude": amplitude, "frequency": frequency, "axis": axis, "exponent": exponent},
    )


FIELD_FAMILIES: Dict[str, Callable[..., HolderField]] = {
    "constant": constant_field,
    "linear": linear_field,
    "capped_power": capped_power_field,
    "symmetric_capped_power": symmetric_capped_power_field,
    "gaussian_bump": gaussian_bump_field,
    "sine": sine_field,
}


def build_field(spec: Dict[str, Any], dimension: int = 1, name: Optional[str] = None) -> HolderField:
    """Build a field from ``{"family": ..., <parameters>, "seminorm"?, "sup_norm"?}``.

    ``seminorm`` and ``sup_norm`` override the declared values, so a
    configuration can understate them on purpose.
    """
    params = dict(spec)
    family = params.pop("family", None)
    if family not in FIELD_FAMILIES:
        raise ValueError(f"unknown field family {family!r}; expected one of {sorted(FIELD_FAMILIES)}")
    seminorm = params.pop("seminorm", None)
    sup_norm = params.pop("sup_norm", None)
    if name is not None:
        params["name"] = name
    built = FIELD_FAMILIES[family](dimension=dimension, **params)
    built = built.with_declared(seminorm, sup_norm)
    declared = dict(built.spec)
    if seminorm is not None:
        declared["seminorm"] = float(seminorm)
    if sup_norm is not None:
        declared["sup_norm"] = float(sup_norm)
    return replace(built, spec=declared)


# -- jump coefficient --------------------------------------------------------

MARK_PROFILES = ("constant", "power", "table")


@dataclass(frozen=True)
class MarkProfile:
    """Mark factor ``psi(v)`` of a separable jump coefficient."""

    family: str = "constant"
    value: float = 1.0
    exponent: float = 1.0
    marks: Tuple[float, ...] = ()
    values: Tuple[float, ...] = ()
    scale: float = 1.0

    def __post_init__(self) -> None:
        if self.family not in MARK_PROFILES:
            raise ValueError(f"mark profile must be one of {MARK_PROFILES}, got {self.family!r}")
        if self.family == "table" and (len(self.marks) < 2 or len(self.marks) != len(self.values)):
            raise ValueError("a tabulated mark profile needs at least two (mark, value) pairs")

    def __call__(self, v: ArrayLike) -> NDArray[np.float64]:
        marks = np.asarray(v, dtype=float)
        if self.family == "constant":
            base = np.full(marks.shape, self.value)
        elif self.family == "power":
            base = self.value * marks**self.exponent
        else:
            base = np.interp(marks, self.marks, self.values)
        return self.scale * base

    def squared_norm(self, levy: LevyMeasureSpec) -> float:
        """``int |psi|^2 d nu``."""
        return levy.integrate(lambda v: self(v) ** 2)

    def mean(self, levy: LevyMeasureSpec) -> float:
        """``int psi d nu``, the compensator rate."""
        return levy.integrate(self)

    def normalized(self, levy: LevyMeasureSpec) -> "MarkProfile":
        norm = self.squared_norm(levy)
        if norm <= 0:
            raise ValueError("cannot normalize a mark profile with zero L2(nu) norm")
        return replace(self, scale=self.scale / math.sqrt(norm))

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {"family": self.family}
        if self.family == "table":
            data.update(marks=list(self.marks), values=list(self.values))
        else:
            data["value"] = self.value
        if self.family == "power":
            data["exponent"] = self.exponent
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "MarkProfile":
        return cls(
            family=str(data.get("family", "constant")),
            value=float(data.get("value", 1.0)),
            exponent=float(data.get("exponent", 1.0)),
            marks=tuple(float(v) for v in data.get("marks", ())),
            values=tuple(float(v) for v in data.get("values", ())),
        )


@dataclass(frozen=True, eq=False)
class JumpCoefficient:
    """Separable jump coefficient ``g(t, x, v) = phi(t, x) psi(v)``."""

    phi: HolderField
    psi: MarkProfile = field(default_factory=MarkProfile)
    separable = True

    def __call__(self, t: float, points: ArrayLike, v: ArrayLike) -> NDArray[np.float64]:
        return self.phi(t, points) * self.psi(v)

    def jump_grid(self, t: float, grid: GridSpec, v: float) -> NDArray[np.float64]:
        """``g(t, ., v)`` on the grid for one jump."""
        return self.phi.on_grid(t, grid) * float(self.psi(v))

    def compensator_grid(self, t: float, grid: GridSpec, levy: LevyMeasureSpec) -> NDArray[np.float64]:
        """``int g(t, ., v) nu(dv)`` on the grid."""
        return self.psi.mean(levy) * self.phi.on_grid(t, grid)

    def normalized(self, levy: LevyMeasureSpec) -> "JumpCoefficient":
        return JumpCoefficient(self.phi, self.psi.normalized(levy))


@dataclass(frozen=True, eq=False)
class GeneralJumpCoefficient:
    """Jump coefficient ``g(t, x, v)`` with no product structure."""

    evaluator: Callable[[float, NDArray[np.float64], NDArray[np.float64]], NDArray[np.float64]]
    name: str = "general"
    separable = False

    def __call__(self, t: float, points: ArrayLike, v: ArrayLike) -> NDArray[np.float64]:
        return np.asarray(self.evaluator(t, np.asarray(points, dtype=float), np.asarray(v, dtype=float)))

    def jump_grid(self, t: float, grid: GridSpec, v: float) -> NDArray[np.float64]:
        return np.broadcast_to(self(t, grid.points(), v), grid.shape).astype(float)

    def compensator_grid(self, t: float, grid: GridSpec, levy: LevyMeasureSpec) -> NDArray[np.float64]:
        marks, weights = levy.mark_rule
        total = np.zeros(grid.shape)
        for mark, weight in zip(marks, weights):
            total += weight * self.jump_grid(t, grid, mark)
        return total


def build_jump_coefficient(
    data: Dict[str, Any], dimension: int, levy: Optional[LevyMeasureSpec]
) -> JumpCoefficient:
    """``{"phi": <field spec>, "psi": <mark profile>, "normalize": bool}``."""
    coefficient = JumpCoefficient(
        phi=build_field(data["phi"], dimension, name="g.phi"),
        psi=MarkProfile.from_dict(data.get("psi", {"family": "constant", "value": 1.0})),
    )
    if data.get("normalize", False):
        if levy is None:
            raise ValueError("normalizing a jump coefficient needs a Lévy measure")
        coefficient = coefficient.normalized(levy)
    return coefficient


# -- random factor of h ------------------------------------------------------

FACTOR_FAMILIES = ("constant", "normal", "uniform")


@dataclass(frozen=True)
class RandomFactor:
    """Path-wise scalar ``h2(omega)`` multiplying the forcing ``h1(t, x)``."""

    family: str = "constant"
    value: float = 1.0
    mean: float = 0.0
    std: float = 1.0
    low: float = 0.0
    high: float = 1.0

    def __post_init__(self) -> None:
        if self.family not in FACTOR_FAMILIES:
            raise ValueError(f"h factor family must be one of {FACTOR_FAMILIES}, got {self.family!r}")
        if self.family == "normal" and self.std < 0:
            raise ValueError(f"h factor std must be nonnegative, got {self.std}")
        if self.family == "uniform" and not self.low < self.high:
            raise ValueError(f"h factor needs low < high, got [{self.low}, {self.high}]")

    @property
    def is_deterministic(self) -> bool:
        return self.family == "constant"

    def sample(self, master_seed: int, path_index: int) -> float:
        if self.family == "constant":
            return self.value
        rng = stream(master_seed, path_index, "h-factor")
        if self.family == "normal":
            return float(self.mean + self.std * rng.standard_normal())
        return float(rng.uniform(self.low, self.high))

    def second_moment(self) -> float:
        if self.family == "constant":
            return self.value**2
        if self.family == "normal":
            return self.mean**2 + self.std**2
        return (self.low**2 + self.low * self.high + self.high**2) / 3.0

    def to_dict(self) -> Dict[str, Any]:
        if self.family == "constant":
            return {"family": "constant", "value": self.value}
        if self.family == "normal":
            return {"family": "normal", "mean": self.mean, "std": self.std}
        return {"family": "uniform", "low": self.low, "high": self.high}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RandomFactor":
        return cls(
            family=str(data.get("family", "constant")),
            value=float(data.get("value", 1.0)),
            mean=float(data.get("mean", 0.0)),
            std=float(data.get("std", 1.0)),
            low=float(data.get("low", 0.0)),
            high=float(data.get("high", 1.0)),
        )


# -- coefficient bundle ------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Coefficients:
    """Data ``(b, h, f, g)``; ``None`` stands for the zero coefficient."""

    h: Optional[HolderField] = None
    f: Optional[HolderField] = None
    g: Optional[Any] = None
    drift: Tuple[HolderField, ...] = ()
    h_factor: RandomFactor = field(default_factory=RandomFactor)

    def __post_init__(self) -> None:
        object.__setattr__(self, "drift", tuple(self.drift))
        dimensions = {
            c.dimension for c in (self.h, self.f, *self.drift) if c is not None
        }
        if self.g is not None and isinstance(self.g, JumpCoefficient):
            dimensions.add(self.g.phi.dimension)
        if len(dimensions) > 1:
            raise DomainError(f"coefficients disagree on the dimension: {sorted(dimensions)}")
        if self.drift and len(self.drift) != next(iter(dimensions)):
            raise DomainError(f"drift needs one component per dimension, got {len(self.drift)}")

    @property
    def has_drift(self) -> bool:
        return any(not b.is_zero for b in self.drift)

    @property
    def drift_norm(self) -> float:
        """Declared ``sup + seminorm`` of the drift, maximized over components."""
        if not self.has_drift:
            return 0.0
        return max(b.sup_norm + b.seminorm for b in self.drift)

    @property
    def drift_exponent(self) -> Optional[float]:
        if not self.has_drift:
            return None
        return min(b.exponent for b in self.drift)

    def without_drift(self) -> "Coefficients":
        return replace(self, drift=())

    def declared_fields(self) -> List[HolderField]:
        fields = [c for c in (self.h, self.f) if c is not None]
        if isinstance(self.g, JumpCoefficient):
            fields.append(self.g.phi)
        return fields + list(self.drift)

    @classmethod
    def from_dict(
        cls, data: Dict[str, Any], dimension: int, levy: Optional[LevyMeasureSpec] = None
    ) -> "Coefficients":
        """Build from ``{"h", "f", "g", "b", "h_factor"}`` specs; missing keys are zero."""
        drift_spec = data.get("b")
        if isinstance(drift_spec, dict):
            drift_spec = [drift_spec]
        drift = tuple(
            build_field(spec, dimension, name=f"b{i + 1}") for i, spec in enumerate(drift_spec or [])
        )
        return cls(
            h=build_field(data["h"], dimension, name="h") if data.get("h") else None,
            f=build_field(data["f"], dimension, name="f") if data.get("f") else None,
            g=build_jump_coefficient(data["g"], dimension, levy) if data.get("g") else None,
            drift=drift,
            h_factor=RandomFactor.from_dict(data.get("h_factor", {})),
        )
