"""Exception hierarchy shared across the package.

The split into config / data / fit errors mirrors the CLI exit codes
(2 / 3 / 4), so scripted runs can tell a bad config from a bad dataset
from a numerical failure.
"""


class RobustSurvError(Exception):
    """Base class for all package errors."""


class ConfigError(RobustSurvError):
    """Invalid configuration value or malformed config file."""


class DataError(RobustSurvError):
    """Malformed or invalid input data."""


class ParseError(DataError):
    """A row of the input file could not be parsed."""

    def __init__(self, row: int, message: str):
        super().__init__(f"row {row}: {message}")
        self.row = row


class ValidationError(DataError):
    """A record violates a structural invariant."""


class FitError(RobustSurvError):
    """A model fit or estimation step failed."""


class ConvergenceError(FitError):
    """Iterative optimisation did not converge."""

    def __init__(self, message: str, gradient_norm: float | None = None):
        super().__init__(message)
        self.gradient_norm = gradient_norm


class PositivityError(FitError):
    """A survival-probability denominator was zero after trimming."""

    def __init__(self, time: float, which: str):
        super().__init__(
            f"zero {which} survival at time {time}; "
            "the uncensored-at-risk probability is not bounded away from zero"
        )
        self.time = time
        self.which = which


class RegressionError(FitError):
    """Pseudo-outcome regression failed (e.g. rank-deficient basis)."""
