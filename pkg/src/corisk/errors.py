"""Exception hierarchy shared by the library and the command line."""


class CoriskError(Exception):
    """Base class for all errors raised by corisk."""

    exit_code = 1


class InputError(CoriskError, ValueError):
    """Bad user input: malformed files, invalid parameters, too little data."""

    exit_code = 2


class InsufficientDataError(InputError):
    pass


class NumericError(CoriskError, ArithmeticError):
    """A numerical routine failed (root finding, optimisation, quadrature)."""

    exit_code = 3


class ConditioningError(NumericError):
    """The conditioning event of a co-risk measure has probability zero."""


class RatioUndefinedError(NumericError):
    """A ratio contribution measure was requested against a nonpositive benchmark."""


class ValidationFailure(CoriskError):
    exit_code = 4
