"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class MacIdError(Exception):
    exit_code = 1


class UsageError(MacIdError):
    exit_code = 1


class ValidationError(MacIdError):
    exit_code = 2


class DimensionError(ValidationError):
    """Alphabet or block-length mismatch between operands."""


class UnsupportedError(MacIdError):
    exit_code = 1


class CapExceededError(MacIdError):
    exit_code = 3


class PropertyViolation(MacIdError):
    exit_code = 4
