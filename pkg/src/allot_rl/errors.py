"""Exception hierarchy shared across the package."""


class AllotError(Exception):
    """Base class for all package errors."""


class ValidationError(AllotError, ValueError):
    """Input data or configuration violates a documented invariant."""


class InsufficientDataError(ValidationError):
    pass


class EmptyPanelError(ValidationError):
    pass


class RangeError(ValidationError):
    """Requested date span is not covered by the data."""


class ConfigError(ValidationError):
    pass


class NumericError(AllotError, FloatingPointError):
    """Non-finite value where a finite one is required."""


class StateError(AllotError, RuntimeError):
    """Operation called in the wrong lifecycle state."""
