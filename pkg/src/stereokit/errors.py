"""Exception types shared across the package."""


class InvalidArgumentError(ValueError):
    """A caller-supplied argument violates an operation's preconditions."""


class InvalidStateError(RuntimeError):
    """An object is used in a way its current state does not allow."""


class FormatError(ValueError):
    """A file or byte stream does not match the expected format."""


class RangeError(ValueError):
    """A value falls outside the representable range of a format."""


class NumericFailure(ArithmeticError):
    """A non-finite value was produced where finite values are required."""
