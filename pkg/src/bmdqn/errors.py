class ValidationError(ValueError):
    """Malformed input: wrong shape, unknown name, out-of-range value."""


class PreconditionError(ValueError):
    """Operation called in a state where it is undefined (e.g. empty buffer)."""


class NumericError(ArithmeticError):
    """A non-finite value appeared where a finite one is required."""


class SpecMismatchError(ValidationError):
    """A checkpoint was written for a different network than the one configured."""
