class NoiseCtlError(Exception):
    """Base class for package errors."""


class ParameterError(NoiseCtlError, ValueError):
    pass


class ShapeError(NoiseCtlError, ValueError):
    pass


class ValidationError(NoiseCtlError, ValueError):
    pass


class ConfigError(NoiseCtlError, ValueError):
    pass


class StateError(NoiseCtlError, RuntimeError):
    pass
