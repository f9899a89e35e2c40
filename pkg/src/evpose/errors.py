"""Exception types shared across the package.

``DataError`` covers malformed or inconsistent input data (CLI exit code 2),
``NumericError`` covers non-finite or degenerate numerics (exit code 3).
"""


class DataError(ValueError):
    """Malformed or inconsistent input data."""


class ParseError(DataError):
    """A line of an input text file could not be parsed."""

    def __init__(self, message: str, line_no: int):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class BoundsError(DataError):
    """Pixel coordinates outside the declared sensor resolution."""


class InvalidRotationError(DataError):
    """A quaternion that cannot represent a rotation (zero norm)."""


class OrderingError(DataError):
    """Timestamps that violate a required ordering."""


class InsufficientDataError(DataError):
    """Too few records to perform the requested operation."""


class CheckpointError(DataError):
    """A checkpoint file that is truncated, version-mismatched or inconsistent."""


class NumericError(ArithmeticError):
    """Non-finite values where finite numbers are required."""


class DegenerateOutputError(NumericError):
    """A network output that cannot be post-processed (e.g. zero-norm quaternion)."""


class ShapeError(ValueError):
    """Tensor shapes incompatible with the requested operation."""
