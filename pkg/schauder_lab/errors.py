"""Exception hierarchy for schauder_lab.

Every error derives from :class:`SchauderLabError` and from the builtin that
describes it best, so callers may catch either.
"""

from typing import List, Optional, Sequence


class SchauderLabError(Exception):
    """Base class for all schauder_lab errors."""


class DomainError(SchauderLabError, ValueError):
    """An argument lies outside the domain of a formula (e.g. t <= 0)."""


class GridMismatchError(SchauderLabError, ValueError):
    """A gridded field does not match the shape of its GridSpec."""


class AlignmentError(SchauderLabError, ValueError):
    """Breakpoints or evaluation times are not nodes of the time grid."""


class MarkSupportError(SchauderLabError, ValueError):
    """Mark cells leave [rho, c) or overlap."""


class LevyMeasureError(SchauderLabError, ValueError):
    """A Lévy measure specification violates its invariants."""


class HorizonError(SchauderLabError, ValueError):
    """An evaluation time lies beyond the path or coefficient horizon."""


class UnsupportedFormError(SchauderLabError, ValueError):
    """A coefficient is not in the form an evaluator supports."""


class PreconditionError(SchauderLabError, ValueError):
    """An operation was called without its required inputs."""


class ResolutionError(SchauderLabError, ValueError):
    """A pair distance is below what the spatial grid resolves."""


class FitError(SchauderLabError, ValueError):
    """Too few usable rows for a log-log fit."""


class MisuseError(SchauderLabError, ValueError):
    """An experiment was configured outside its meaningful range."""


class NonConvergenceError(SchauderLabError, RuntimeError):
    """The Picard iteration failed to contract on the smallest window."""

    def __init__(self, message: str, ratio_history: Optional[Sequence[dict]] = None) -> None:
        super().__init__(message)
        self.ratio_history: List[dict] = list(ratio_history or [])


class ConfigParseError(SchauderLabError, ValueError):
    """The configuration text is not well-formed."""

    def __init__(self, message: str, line: int, column: int) -> None:
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


class ConfigValidationError(SchauderLabError, ValueError):
    """The configuration parsed but violates one or more invariants."""

    def __init__(self, violations: Sequence[str]) -> None:
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))
