"""Exception hierarchy shared by every module."""

from __future__ import annotations


class ConfoundError(Exception):
    """Base class for all errors raised by this package."""


class DataError(ConfoundError):
    """Problems with the data or context metadata (CLI exit code 3)."""


class UnknownNode(ConfoundError, KeyError):
    def __str__(self) -> str:
        return Exception.__str__(self)


class RetryExhausted(ConfoundError):
    pass


class InvalidInterventionValue(ConfoundError, ValueError):
    pass


class UnknownColumn(DataError, KeyError):
    def __str__(self) -> str:
        return Exception.__str__(self)


class EmptyContextSet(DataError):
    pass


class InsufficientContexts(DataError):
    def __init__(self, needed: int, got: int, what: str = "context-level streams"):
        self.needed = needed
        self.got = got
        super().__init__(f"need at least {needed} contexts for {what}, got {got}")


class UnsupportedSupport(DataError):
    pass


class SupportNotCovered(DataError):
    def __init__(self, variables, missing):
        self.variables = tuple(variables)
        self.missing = list(missing)
        super().__init__(
            f"hard interventions on {self.variables} do not cover values {self.missing}; "
            "P(. | do(.)) needs a hard-intervention context for every value"
        )


class NonHardContext(DataError):
    pass


class SupportMismatch(ConfoundError, ValueError):
    pass


class DivergenceInfinite(ConfoundError, ArithmeticError):
    """The interventional table puts zero mass where the observational one does not."""


class StratumEmpty(DataError):
    pass


class MalformedFile(DataError):
    def __init__(self, path, detail: str, line: int | None = None):
        self.path = str(path)
        self.line = line
        where = f"{self.path}:{line}" if line is not None else self.path
        super().__init__(f"{where}: {detail}")


class InvalidSetSize(ConfoundError, ValueError):
    pass


class DirectionRequired(ConfoundError, ValueError):
    pass
