"""Exception hierarchy used across the package."""


class GLRSMError(Exception):
    """Base class for all package errors."""


class InsufficientDataError(GLRSMError, ValueError):
    """A window or series is too short for the requested fit."""


class ConfigurationError(GLRSMError, ValueError):
    """Invalid pipeline or command-line configuration."""


class DomainError(GLRSMError, ValueError):
    """Parameters outside the admissible region, or a non-finite likelihood term."""


class ConvergenceError(GLRSMError, RuntimeError):
    """The optimizer failed; ``best`` carries the best point found."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class DegenerateContrastError(GLRSMError, ArithmeticError):
    """The fitted parameters on both sides of a change-point do not differ."""
