"""Exception hierarchy.

``ValidationError`` subclasses describe bad designs or inputs (CLI exit 2);
``NumericalError`` subclasses describe failures inside the numerics (CLI exit 3).
"""


class MMANOVAError(Exception):
    pass


class ValidationError(MMANOVAError, ValueError):
    pass


class NumericalError(MMANOVAError, ArithmeticError):
    pass


class NotPositiveDefinite(NumericalError):
    pass


class NonConvergence(NumericalError):
    pass


class AllZero(NumericalError):
    pass


class InvalidDof(ValidationError):
    pass


class InvalidDims(ValidationError):
    pass


class Unbalanced(ValidationError):
    pass


class NonOrthogonal(ValidationError):
    pass


class DegenerateBasis(ValidationError):
    pass


class InsufficientDof(ValidationError):
    def __init__(self, message, batch=None):
        super().__init__(message)
        self.batch = batch


class ZeroDof(ValidationError):
    pass


class RejectionExhausted(NumericalError):
    def __init__(self, message, batch=None):
        super().__init__(message)
        self.batch = batch


class Empty(ValidationError):
    pass


class LengthMismatch(ValidationError):
    pass


class InsufficientN(ValidationError):
    pass


class InvalidSizes(ValidationError):
    pass


class MissingCovariance(ValidationError):
    pass
