"""Exception types raised across driftkit."""

from __future__ import annotations


class DriftkitError(Exception):
    """Base class for every error raised by the library."""


class InvalidParameter(DriftkitError, ValueError):
    """A parameter lies outside its allowed range.

    ``violations`` holds ``(field, message)`` pairs, one per broken constraint.
    """

    def __init__(self, violations: list[tuple[str, str]] | str, field: str | None = None):
        if isinstance(violations, str):
            violations = [(field or "", violations)]
        self.violations = list(violations)
        text = "; ".join(f"{f}: {m}" if f else m for f, m in self.violations)
        super().__init__(text)

    @property
    def fields(self) -> list[str]:
        return [f for f, _ in self.violations]


class NonStochasticRow(InvalidParameter):
    """A Markov transition row does not sum to one."""


class UnknownFamily(DriftkitError, KeyError):
    def __str__(self) -> str:
        return str(self.args[0]) if self.args else "unknown process family"


class NonpositiveDelta(InvalidParameter):
    pass


class NegativeStart(InvalidParameter):
    pass


class TargetNotPositive(InvalidParameter):
    pass


class StartBelowTarget(InvalidParameter):
    pass


class NonmonotoneH(InvalidParameter):
    pass


class NonpositiveH(InvalidParameter):
    pass


class EmptyOrInvertedInterval(InvalidParameter):
    pass


class AllCensored(DriftkitError):
    """Every trajectory hit the step horizon; no hitting-time sample exists."""


class NoTransitions(DriftkitError):
    pass


class CensoredBatch(DriftkitError):
    pass


class PreconditionFailed(DriftkitError):
    def __init__(self, message: str, reports=()):
        super().__init__(message)
        self.reports = list(reports)


class MissingCheck(DriftkitError):
    def __init__(self, theorem: str, conditions: list[str]):
        self.theorem = theorem
        self.conditions = list(conditions)
        super().__init__(f"{theorem}: no report for {', '.join(self.conditions)}")


class SingularSystem(DriftkitError):
    pass


class ParseError(DriftkitError):
    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        where = f"line {line}, column {column}: " if line is not None else ""
        super().__init__(where + message)


class ValidationError(DriftkitError):
    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")
