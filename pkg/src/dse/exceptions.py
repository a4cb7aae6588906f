"""Exception hierarchy shared by all dse modules."""


class DseError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(DseError, ValueError):
    """Array shapes do not agree or a matrix lacks a required structure."""


class InvalidAxisError(DseError, ValueError):
    pass


class ConfigError(DseError, ValueError):
    """Invalid or incomplete experiment configuration."""


class DataError(DseError, ValueError):
    """Input data cannot be used (malformed file, empty class, ...)."""


class NumericError(DseError, ArithmeticError):
    """A numerical procedure produced an unusable result."""


class DegenerateTaskError(DataError):
    """Training data has fewer than two classes."""


class DegenerateModelError(NumericError):
    pass


class DegenerateSeparationError(NumericError):
    """Separation direction or spread is zero, so the measure is undefined."""
