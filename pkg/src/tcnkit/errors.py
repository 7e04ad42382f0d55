"""Exception hierarchy shared by all tcnkit modules.

The CLI maps these onto stable exit codes: ConfigError -> 1,
DataError (and subclasses) -> 2, DivergenceError -> 3.
"""


class TcnkitError(Exception):
    """Base class for all errors raised by tcnkit."""


class ConfigError(TcnkitError):
    """Invalid configuration value or option combination."""


class DataError(TcnkitError):
    """Problem with input data (files, shapes, alignment)."""


class FormatError(DataError):
    """File does not follow the expected container format."""


class CorruptFileError(DataError):
    """File follows the format but its payload is inconsistent."""


class ValidationError(DataError):
    """Data violates a declared invariant (e.g. label range)."""


class ShapeError(DataError):
    """Tensor dimensions incompatible with the requested operation."""


class AlignmentError(DataError):
    """Predictions and ground truth do not line up row-for-row."""


class DivergenceError(TcnkitError):
    """Training produced non-finite values."""


class SingularityError(DivergenceError):
    """A weight-normalized direction collapsed to the zero vector."""
