class SRGMError(Exception):
    """Base class for library errors."""


class InvalidProbabilityError(SRGMError, ValueError):
    pass


class DimensionMismatchError(SRGMError, ValueError):
    pass


class InvalidPairError(SRGMError, ValueError):
    pass


class NumericalFailureError(SRGMError, ArithmeticError):
    pass


class SingularMatrixError(SRGMError, ArithmeticError):
    def __init__(self, message, pivot=None):
        super().__init__(message)
        self.pivot = pivot


class NoSolutionError(SRGMError, ValueError):
    """Raised when the subcritical fixed point does not exist (lambda <= 1)."""


class NotConvergedError(SRGMError, RuntimeError):
    pass


class DataFormatError(SRGMError, ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
