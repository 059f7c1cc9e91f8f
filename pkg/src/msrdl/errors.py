"""Exception hierarchy. The CLI maps each class to a distinct exit code."""


class MsrdlError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class ConfigError(MsrdlError, ValueError):
    """Invalid parameters or parameter combinations."""

    exit_code = 2


class DataError(MsrdlError, ValueError):
    """Malformed, inconsistent or missing input data."""

    exit_code = 3


class NumericError(MsrdlError, RuntimeError):
    """A numerical stage could not produce a valid result."""

    exit_code = 4
