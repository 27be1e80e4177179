"""Exception types shared across the package."""


class TensorTuneError(Exception):
    """Base class for every error raised by this package."""


class DataValidationError(TensorTuneError):
    """Input data violates the dataset schema or a structural invariant."""


class NumericFailure(TensorTuneError):
    """A numeric computation produced a NaN or overflowed its domain."""
