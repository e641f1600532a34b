"""Exception types raised across the package."""


class NearcritError(Exception):
    """Base class for all package errors."""


class ConfigurationError(NearcritError, ValueError):
    """An invalid lattice specification or run configuration."""


class UsageError(NearcritError, ValueError):
    """An operation was called with arguments outside its contract."""


class CalibrationError(NearcritError, RuntimeError):
    """Monte Carlo calibration produced no usable estimate."""


class IntegrityError(NearcritError, ValueError):
    """Inputs or files are internally inconsistent."""


class FormatError(NearcritError, ValueError):
    """A file does not follow the expected binary format."""


class FitError(NearcritError, ValueError):
    """A regression could not be performed on the supplied points."""


class InfiniteLambdaError(NearcritError, ValueError):
    """The inverse near-critical map was asked for p in {0, 1}."""


class UnreachableError(NearcritError, RuntimeError):
    """An invasion target lies outside the start component."""
