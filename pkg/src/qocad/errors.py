"""Exception types raised across the package."""


class QocError(Exception):
    """Base class for all package errors."""


class DimensionError(QocError, ValueError):
    """Operands have incompatible shapes."""


class ConfigurationError(QocError, ValueError):
    """A problem or run configuration is inconsistent."""


class OptimizationError(QocError, RuntimeError):
    """The optimizer hit a non-finite cost or gradient.

    ``trace`` holds the iteration records collected up to the failure.
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = list(trace or [])
