"""Shared exception types."""


class ShapeError(ValueError):
    """Inputs have inconsistent or unexpected dimensions."""


class NumericError(ArithmeticError):
    """A computation produced non-finite or otherwise unusable values."""


class DataError(ValueError):
    """A dataset, config, or file violates the expected format."""
