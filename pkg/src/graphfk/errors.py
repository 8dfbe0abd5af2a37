"""Exception types shared across the package."""


class DomainError(ValueError):
    """Input outside the domain of an operation (bad vertex, non-edge, t < 0, ...)."""


class NumericError(ArithmeticError):
    """A floating point computation failed (overflow, eigensolver failure)."""
