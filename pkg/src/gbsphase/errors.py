"""Exception hierarchy shared by the library and the command line."""


class GbsError(Exception):
    """Base class for all errors raised by gbsphase."""

    exit_code = 1


class ParameterError(GbsError, ValueError):
    """A parameter lies outside its allowed domain."""

    exit_code = 2


class ConfigError(GbsError):
    """Malformed or inconsistent run configuration."""

    exit_code = 2


class DataError(GbsError):
    """Input data (matrix, pattern or CSV files) could not be used."""

    exit_code = 3


class MatrixFormatError(DataError):
    pass


class MatrixValidationError(DataError):
    pass


class PatternFormatError(DataError):
    pass


class NumericalValidityError(GbsError):
    """A computed quantity is not usable (no valid bins, non-finite errors...)."""

    exit_code = 4


class UnsupportedOrderError(ParameterError):
    """Moment requested that the chosen operator ordering cannot represent."""
