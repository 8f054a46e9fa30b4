"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class BNKError(Exception):
    """Base class for every error raised by the package."""


class InputContractError(BNKError, ValueError):
    """An argument violates the documented precondition of an operation."""


class DegenerateDirectionError(InputContractError):
    """The relative velocity vanishes, so the collision direction is undefined."""


class InvalidKernelError(InputContractError):
    """The angular kernel is negative, unbounded or not finite."""


class UnsupportedRegimeError(InputContractError):
    """The requested parameters fall outside the regime an operation supports."""


class StepRejectedError(BNKError):
    """An Euler step would break the positivity margin."""


class FitFailureError(BNKError):
    """Equilibrium fitting did not converge; carries the final residuals."""

    def __init__(self, message: str, residuals=None):
        super().__init__(message)
        self.residuals = residuals


class SnapshotFormatError(BNKError):
    """A snapshot file has a wrong magic string or an inconsistent shape."""


class ConfigError(BNKError):
    """Configuration text is malformed; ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)
