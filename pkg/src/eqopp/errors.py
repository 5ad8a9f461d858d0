"""Exception types shared across the package.

The CLI maps each family onto a distinct exit code, so library code raises the
most specific class that applies.
"""


class EqoppError(Exception):
    """Base class for every error raised by eqopp."""


class ConfigError(EqoppError, ValueError):
    """Invalid scenario, rule or dynamics configuration."""


class DataError(EqoppError, ValueError):
    """Input data that violates a data-model invariant."""

    def __init__(self, message, row=None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class LabelsRequiredError(DataError):
    """Raised when an operation needs true labels that the population lacks."""

    def __init__(self, message="labels required for audit"):
        super().__init__(message)


class InfeasibleFitError(EqoppError):
    """A fitting target cannot be reached for some group."""

    def __init__(self, message, group=None):
        self.group = group
        super().__init__(message)
