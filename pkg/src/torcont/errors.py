"""Exception types shared across the package."""


class TorcontError(Exception):
    """Base class for all package errors."""


class InputError(TorcontError, ValueError):
    """Malformed or dimensionally inconsistent input."""


class ConfigError(TorcontError, ValueError):
    """Invalid run configuration (bad released set, unknown names, ...)."""


class ConvergenceError(TorcontError, RuntimeError):
    """Newton or continuation failed to converge."""


class IntegrationError(TorcontError, RuntimeError):
    """Time integration failed (step-size underflow, blow-up)."""

    def __init__(self, message, last_time=None):
        super().__init__(message)
        self.last_time = last_time


class NotFoundError(TorcontError, LookupError):
    """Requested run, label or file does not exist."""


class FormatError(TorcontError, ValueError):
    """On-disk data has the wrong format or version."""


class BranchPointError(TorcontError, RuntimeError):
    """Branch-point classification or switching failed."""
