"""Exception types shared across the package."""


class BodyPathError(Exception):
    """Base class for all planner errors."""


class InvalidParameterError(BodyPathError):
    """Raised when an argument or configuration value is out of range."""


class EmptyMapError(BodyPathError):
    """Raised when an operation requires at least one known map cell."""


class MapParseError(BodyPathError):
    """Raised when a serialized map or input file cannot be decoded."""


class UndefinedNormalError(BodyPathError):
    """Raised when an analytic surface normal is requested at a discontinuity."""
