"""Exception types raised across the package."""


class InjectCheckError(Exception):
    """Base class for all package errors."""


class DimensionError(InjectCheckError, ValueError):
    """Inconsistent or unsupported array shapes."""


class BudgetExceeded(InjectCheckError, RuntimeError):
    """A cell or region enumeration grew past its configured cap."""

    def __init__(self, message, count=None):
        super().__init__(message)
        self.count = count


class SingularBasis(InjectCheckError, ValueError):
    pass


class NonPositiveScale(InjectCheckError, ValueError):
    pass


class ShapeError(InjectCheckError, ValueError):
    """Kernel width does not fit inside the signal or padding box."""


class DegenerateRatio(InjectCheckError, ValueError):
    pass


class UnsupportedStride(InjectCheckError, ValueError):
    pass


class ZeroRow(InjectCheckError, ValueError):
    pass


class NotInjective(InjectCheckError, ValueError):
    """Raised when an operation requires a certified-injective matrix."""


class CsvFormatError(InjectCheckError, ValueError):
    """Malformed matrix CSV; carries the 1-based line and column."""

    def __init__(self, message, line=None, column=None):
        loc = ""
        if line is not None:
            loc = f" (line {line}" + (f", column {column})" if column is not None else ")")
        super().__init__(message + loc)
        self.line = line
        self.column = column
