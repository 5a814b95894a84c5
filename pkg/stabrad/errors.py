from typing import Any, List, Optional


class StabRadError(Exception):
    """Base class for every error raised by stabrad."""


class SpecValidationError(StabRadError, ValueError):
    def __init__(self, violations: List[str]):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations) or "invalid problem spec")


class DimensionMismatch(SpecValidationError):
    pass


class UnstableNominal(SpecValidationError):
    pass


class NonBinaryMask(SpecValidationError):
    pass


class NumericError(StabRadError, RuntimeError):
    pass


class RepeatedEigenvalue(NumericError):
    pass


class DefectiveMatrix(NumericError):
    pass


class FeasibilityError(StabRadError, ValueError):
    pass


class InfeasibleAtNominal(StabRadError, RuntimeError):
    pass


class NonTermination(StabRadError, RuntimeError):
    def __init__(self, message: str, trace: Optional[List[Any]] = None):
        self.trace = list(trace or [])
        super().__init__(message)


class TooManyFreeEntries(StabRadError, ValueError):
    pass


class InvalidGamma(StabRadError, ValueError):
    pass


class NoUpperBound(StabRadError, RuntimeError):
    pass


class NotConverged(StabRadError, RuntimeError):
    def __init__(self, message: str, report: Any = None):
        self.report = report
        super().__init__(message)


class ParseError(StabRadError, ValueError):
    def __init__(self, message: str, field: Optional[str] = None, line: Optional[int] = None):
        self.field = field
        self.line = line
        where = []
        if field:
            where.append(f"field '{field}'")
        if line is not None:
            where.append(f"line {line}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)


class UsageError(StabRadError, ValueError):
    pass
