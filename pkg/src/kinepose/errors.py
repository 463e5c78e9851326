"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Operand shapes are incompatible."""


class ConfigError(ValueError):
    """A configuration value or combination is invalid."""


class BoundsError(IndexError):
    """A window or index range falls outside a sequence."""


class PoseFileError(ValueError):
    """A pose file could not be parsed."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class VersionError(PoseFileError):
    """File format version is not supported."""


class NumericalError(RuntimeError):
    """Computation produced non-finite values."""
