"""Exception hierarchy for slyap."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Violation:
    """One problem found while validating an input document."""

    mode: int | None
    field: str
    message: str

    def __str__(self) -> str:
        where = f"mode {self.mode}, field {self.field}" if self.mode is not None else f"field {self.field}"
        return f"{where}: {self.message}"


class SlyapError(Exception):
    """Base class of every error raised on purpose by slyap."""


class ValidationError(SlyapError, ValueError):
    """Input description rejected; carries the full list of violations."""

    def __init__(self, violations: list[Violation] | Violation | str) -> None:
        if isinstance(violations, str):
            violations = [Violation(None, "input", violations)]
        elif isinstance(violations, Violation):
            violations = [violations]
        self.violations: list[Violation] = list(violations)
        super().__init__("; ".join(str(v) for v in self.violations))


class DimensionError(ValidationError):
    """Matrix or vector shapes do not fit together."""


class SingularMatrixError(SlyapError, ArithmeticError):
    """A matrix that must be inverted is singular or nearly so."""

    def __init__(self, role: str, rcond: float | None = None) -> None:
        self.role = role
        self.rcond = rcond
        detail = f" (reciprocal condition {rcond:.3g})" if rcond is not None else ""
        super().__init__(f"singular matrix: {role}{detail}")


class AssumptionError(SlyapError):
    """The fast subsystem is not certified exponentially stable."""


class PreconditionError(SlyapError, ValueError):
    """Inputs are well formed but outside the domain of an operation."""


class ConsistencyError(SlyapError):
    """Computed bounds contradict each other."""
