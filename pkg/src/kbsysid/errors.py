"""Exception types raised by the identification routines."""


class SizeError(ValueError):
    """Array lengths or problem dimensions are inconsistent."""


class UndefinedScoreError(ValueError):
    """The fit score has a zero denominator (constant true response)."""


class DegenerateError(ValueError):
    """The data carry no information about the requested quantity."""


class NumericalError(ArithmeticError):
    """A factorization failed even after regularization."""
