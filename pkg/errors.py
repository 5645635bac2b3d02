"""
Error types for truncation-limits.

Every failure the library can signal derives from TruncationLimitsError so the
command line front end can map them to exit codes in one place.
"""

from typing import Optional


class TruncationLimitsError(Exception):
    """Base class for all library errors."""

    exit_code = 2


class NumericalFailure(TruncationLimitsError):
    """Quadrature did not reach the requested tolerance."""

    exit_code = 3

    def __init__(self, message: str, error_estimate: Optional[float] = None):
        super().__init__(message)
        self.error_estimate = error_estimate


class SamplingBudgetError(TruncationLimitsError):
    """Rejection sampling exhausted its attempt budget."""

    exit_code = 3

    def __init__(self, message: str, attempted: int, accepted: int):
        super().__init__(message)
        self.attempted = attempted
        self.accepted = accepted


class CoverBudgetError(TruncationLimitsError):
    """A bracket cover would exceed the configured size budget."""

    exit_code = 3

    def __init__(self, message: str, epsilon: float, partial_integral: Optional[float] = None):
        super().__init__(message)
        self.epsilon = epsilon
        self.partial_integral = partial_integral


class NearBoundarySingularity(TruncationLimitsError):
    """C(y) is too small for a stable influence-function evaluation."""

    exit_code = 3

    def __init__(self, message: str, y: float, c_value: float):
        super().__init__(message)
        self.y = y
        self.c_value = c_value


class EmptySampleError(TruncationLimitsError):
    """An estimator was handed a sample with no observations."""


class InvalidSampleError(TruncationLimitsError):
    """A pair violates the observability rule y >= t."""


class AssumptionViolation(TruncationLimitsError):
    """A model fails Assumption A, Assumption B or the weak conditions."""

    def __init__(self, message: str, assumption: str):
        super().__init__(message)
        self.assumption = assumption


class ConfigError(TruncationLimitsError):
    """A run configuration is malformed or semantically invalid."""

    def __init__(self, message: str, field: Optional[str] = None, line: Optional[int] = None):
        location = []
        if field:
            location.append(f"field '{field}'")
        if line is not None:
            location.append(f"line {line}")
        prefix = f"{', '.join(location)}: " if location else ""
        super().__init__(prefix + message)
        self.field = field
        self.line = line


class DatasetError(TruncationLimitsError):
    """A dataset file cannot be ingested."""

    def __init__(self, message: str, rows: Optional[list] = None):
        super().__init__(message)
        self.rows = rows or []


class DegenerateCoordinateError(TruncationLimitsError):
    """A CLT coordinate has zero asymptotic variance."""

    def __init__(self, message: str, phi_label: str):
        super().__init__(message)
        self.phi_label = phi_label
