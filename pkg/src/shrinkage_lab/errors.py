"""Exception hierarchy shared across the package.

Exit-code mapping used by the CLI: ConfigError -> 2, NumericalError -> 3.
"""


class ShrinkageLabError(Exception):
    """Base class for all package errors."""


class ConfigError(ShrinkageLabError):
    """Invalid or inconsistent user-supplied configuration."""


class NumericalError(ShrinkageLabError):
    """A numerical routine failed to produce a trustworthy result."""


class ConvergenceError(NumericalError):
    """Iterative solver did not reach the requested residual.

    Carries the last residual so callers can report how close it got.
    """

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


class DomainError(ShrinkageLabError):
    """Input lies outside the mathematical domain of an operation."""
