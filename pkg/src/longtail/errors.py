"""Exception types shared across the package."""


class LongtailError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(LongtailError):
    """Invalid configuration value, unknown config key, or bad hyperparameter."""


class DataError(LongtailError):
    """Invalid dataset content: out-of-range labels, empty classes, zero counts."""


class ShapeError(LongtailError):
    """Array dimensions do not chain or do not match a declared interface."""


class StateError(LongtailError):
    """Operation invoked with state that does not match its precondition."""


class FormatError(LongtailError):
    """Malformed serialized file. Carries the byte offset of the problem."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class NumericError(LongtailError):
    """A numeric invariant broke mid-run (NaN/Inf loss or activation)."""
