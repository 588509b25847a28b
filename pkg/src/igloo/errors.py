"""Exception types shared across the package."""


class IglooError(Exception):
    """Base class for all package-specific errors."""


class ShapeError(IglooError):
    """Operand shapes are incompatible with the requested operation."""


class ConfigError(IglooError):
    """Invalid configuration key, value, or combination."""


class DataError(IglooError):
    """Task data is missing, empty, or malformed at the semantic level."""


class FormatError(IglooError):
    """A binary file does not match its expected on-disk format."""


class NumericsError(IglooError):
    """Non-finite values encountered in checked mode, or training diverged."""

    def __init__(self, message, metrics=None):
        super().__init__(message)
        self.metrics = metrics  # partial RunMetrics when training aborts


class UnsupportedOpError(IglooError):
    """A computation used an operation outside the differentiable op set."""
