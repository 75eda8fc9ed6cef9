"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: validation problems exit with 2,
numerical failures with 3.
"""


class CavitybusError(Exception):
    """Base class for all package errors."""


class ValidationError(CavitybusError):
    """Bad input: configuration, file format, or physical-regime violation."""


class ConfigError(ValidationError):
    """Configuration file cannot be parsed or validated."""


class GridFormatError(ValidationError):
    """Spectrum grid file is malformed."""


class DispersiveRangeError(ValidationError):
    """Detuning below the dispersive validity floor."""


class NumericalError(CavitybusError):
    """A numerical procedure failed to produce a result."""


class BracketError(NumericalError):
    """Root bracketing failed: no sign change over the given interval."""


class UnsplitError(NumericalError):
    """Spectrum row does not show two resolvable peaks."""


class DegenerateDataError(NumericalError):
    """Data carries no signal to fit (e.g. flat trace)."""
