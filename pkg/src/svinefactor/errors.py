"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ``DataError`` -> 2, ``NumericsError`` -> 3.
Anything else is treated as an internal failure.
"""


class SvineFactorError(Exception):
    """Base class for all package errors."""


class DataError(SvineFactorError):
    """Invalid, malformed, or insufficient input data."""


class ModelFormatError(DataError):
    """Model file cannot be read: wrong schema version or corrupt content."""


class NumericsError(SvineFactorError):
    """A numerical routine failed to produce a usable result."""


class SingularRotationError(NumericsError):
    """The rotation matrix is (numerically) singular at the requested angles."""
