"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Tensor shapes are incompatible; the message names the offending axes."""


class ParameterError(ValueError):
    """A scalar argument is out of its allowed range."""


class NumericError(ValueError):
    """A value that must be finite is NaN or infinite."""


class DegenerateStepError(ZeroDivisionError):
    """The secant denominator (previous weight step) is zero; use the
    gradient-descent fallback instead."""


class StaleCacheError(RuntimeError):
    """A forward cache is being reused after the weights changed."""


class DataError(ValueError):
    """Label or image data violates its contract (e.g. out-of-range class)."""


class FormatError(ValueError):
    """A file is malformed. ``offset`` is the byte position of the problem."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class UndefinedMetricError(ValueError):
    """A metric was requested before any data was accumulated."""


class ExperimentError(RuntimeError):
    """An experiment produced no usable runs (e.g. every repetition diverged)."""
