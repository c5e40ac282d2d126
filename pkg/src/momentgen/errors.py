"""Exception hierarchy shared across the package."""


class MomentGenError(Exception):
    """Base class for all package errors."""


class DataError(MomentGenError):
    """Problems with input data or files (CLI exit code 2)."""


class NumericalError(MomentGenError):
    """Numerical failures (CLI exit code 3)."""


class DimensionMismatch(MomentGenError, ValueError):
    pass


class ShapeMismatch(DimensionMismatch):
    pass


class EmptySequence(MomentGenError, ValueError):
    pass


class InsufficientData(MomentGenError, ValueError):
    pass


class InvalidLayout(MomentGenError, ValueError):
    pass


class LayerOutOfRange(MomentGenError, IndexError):
    pass


class InvalidCutoff(MomentGenError, ValueError):
    pass


class InvalidSpec(MomentGenError, ValueError):
    pass


class NotPositiveDefinite(NumericalError):
    pass


class NonFiniteLoss(NumericalError):
    pass


class FormatError(DataError):
    pass


class ParseError(DataError):
    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class LengthMismatch(DataError):
    pass


class EmptyDataset(DataError):
    pass
