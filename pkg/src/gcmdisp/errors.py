"""Exception types raised across the package."""


class DimensionError(ValueError):
    """Raster shapes disagree, or a kernel does not fit inside a raster."""


class ParameterError(ValueError):
    """A scalar parameter is outside its admissible range."""


class ConfigurationError(ValueError):
    """An estimation strategy or sweep was configured inconsistently."""


class NumericalError(ArithmeticError):
    """Non-finite values appeared during a numerical solve."""


class FormatError(ValueError):
    """Malformed file content. ``offset`` is the byte position of the fault."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte {offset})"
        super().__init__(message)
        self.offset = offset


class LoadError(OSError):
    """A dataset file is missing or inconsistent with the rest of a scene."""

    def __init__(self, message, path=None):
        if path is not None:
            message = f"{path}: {message}"
        super().__init__(message)
        self.path = path
