"""Exception and warning types shared across the package."""


class PLLError(Exception):
    """Base class for all pllkit errors."""


class FormatError(PLLError):
    """A binary or text file does not conform to its on-disk layout."""


class ConfigError(PLLError):
    """A parameter or configuration value is outside its legal range."""


class ShapeError(PLLError):
    """Array arguments have inconsistent or illegal shapes."""


class NumericalError(PLLError):
    """A computation produced non-finite or otherwise unusable values."""


class PLLWarning(UserWarning):
    """Base class for pllkit warnings."""


class NumericalWarning(PLLWarning):
    """A value was clamped or renormalized to keep a computation finite."""
