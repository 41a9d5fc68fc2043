"""Exception and warning types shared across the package.

Two error branches matter to callers: ``DataError`` covers defects in the
input data itself, while ``NumericalError`` covers failures of the numerical
procedures run on otherwise valid data.  The command-line driver maps the
former to exit code 1 and the latter to exit code 2.
"""

from __future__ import annotations


class WsiError(Exception):
    """Base class for all package-specific errors."""


class DataError(WsiError):
    """The input data violates a documented requirement."""


class NumericalError(WsiError):
    """A numerical procedure failed on otherwise valid input."""


class ConstantColumn(DataError):
    """A covariate column has zero sample variance and cannot be standardized."""

    def __init__(self, column: int):
        self.column = column
        super().__init__(f"covariate column {column} has zero sample variance")


class EmptyData(DataError):
    """The input contains no data rows."""


class MissingResponse(DataError):
    """The response column is absent from the input."""

    def __init__(self, name: str):
        self.name = name
        super().__init__(f"response column {name!r} not found in header")


class ParseError(DataError):
    """A row of the input could not be parsed."""

    def __init__(self, line: int, column: int, byte_offset: int, detail: str):
        self.line = line
        self.column = column
        self.byte_offset = byte_offset
        super().__init__(
            f"parse error at line {line}, column {column} "
            f"(byte offset {byte_offset}): {detail}"
        )


class NonNumericCell(DataError):
    """A cell holds a value that is not a finite number."""

    def __init__(self, line: int, column: int, value: str):
        self.line = line
        self.column = column
        self.value = value
        super().__init__(
            f"non-numeric cell at line {line}, column {column}: {value!r}"
        )


class SeparationDetected(NumericalError):
    """Likelihood maximization diverged, e.g. complete separation in a
    logistic model."""


class SingularInformation(NumericalError):
    """The observed information matrix is not positive definite."""


class DegenerateDenominator(NumericalError):
    """A selection-probability denominator is not strictly positive."""

    def __init__(self, columns):
        self.columns = tuple(int(j) for j in columns)
        cols = ", ".join(str(j) for j in self.columns)
        super().__init__(
            f"selection-probability denominator not positive for column(s) {cols}"
        )


class SingularSystem(NumericalError):
    """A linear system required by the bias or covariance estimator is
    singular."""


class NotActive(WsiError):
    """A de-biased interval was requested for a coordinate outside the
    active set."""

    def __init__(self, index: int):
        self.index = index
        super().__init__(f"coordinate {index} is not in the active set")


class TooManyFailures(NumericalError):
    """Too large a fraction of bootstrap replicates failed to converge."""

    def __init__(self, failures: int, total: int):
        self.failures = failures
        self.total = total
        super().__init__(
            f"{failures} of {total} bootstrap replicates failed to converge"
        )


class NoConvergence(UserWarning):
    """Coordinate descent hit its sweep cap; the warning carries the last
    iterate so callers may still inspect or use it."""

    def __init__(self, message: str, beta_star=None):
        super().__init__(message)
        self.beta_star = beta_star


class AllSelected(UserWarning):
    """Every coordinate was selected, so the noise threshold has no sample
    to calibrate on and falls back to zero."""
