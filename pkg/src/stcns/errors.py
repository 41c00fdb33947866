"""Exception types shared across the package."""


class StcnsError(Exception):
    """Base class for all package errors."""


class InvalidFieldError(StcnsError):
    """A field contains NaN/Inf samples or coefficients."""


class GridMismatchError(StcnsError):
    """Two fields that must share a grid do not."""


class ConfigError(StcnsError):
    """Configuration document is invalid.

    ``key`` carries the dotted path of the offending entry when known.
    """

    def __init__(self, message, key=None):
        self.key = key
        if key is not None:
            message = f"{key}: {message}"
        super().__init__(message)


class PositivityError(StcnsError):
    """A diagnostic precondition on field positivity failed.

    Carries the offending minimum so callers can report how far below the
    admissible range the field dipped.
    """

    def __init__(self, message, field_name, minimum):
        self.field_name = field_name
        self.minimum = minimum
        super().__init__(f"{message} (field {field_name!r}, min={minimum:.6e})")


class BlowUpError(StcnsError):
    """Non-finite values appeared while assembling a drift ("blow-up detected")."""


class CheckpointError(StcnsError):
    """Checkpoint file cannot be read back (corrupt, truncated, or mismatched)."""
