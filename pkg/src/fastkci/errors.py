"""Exception types raised across the package."""


class FastKCIError(Exception):
    """Base class for all package errors."""


class ValidationError(FastKCIError, ValueError):
    """Invalid input shape, range or configuration."""


class AllSamplesIdentical(ValidationError):
    pass


class AlreadyCentered(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


class RowCountMismatch(DimensionMismatch):
    pass


class TooFewSamples(ValidationError):
    pass


class NodeCountMismatch(ValidationError):
    pass


class NonFiniteLogWeight(ValidationError):
    pass


class ColumnSpecError(ValidationError):
    pass


class ParseError(ValidationError):
    pass


class NumericalError(FastKCIError, ArithmeticError):
    """A linear-algebra routine failed on input that should have been valid."""


class SolveFailed(NumericalError):
    pass


class EigFailed(NumericalError):
    pass


class CholeskyFailed(NumericalError):
    pass


class CITestFailed(FastKCIError):
    """A conditional independence test raised inside a structure search."""
