"""Exception hierarchy shared by every flowprice module."""


class FlowPriceError(Exception):
    """Base class for all package errors."""


class InvalidParameterError(FlowPriceError, ValueError):
    """A model parameter is non-finite or violates a hard constraint."""


class UnsupportedRegimeError(FlowPriceError, ValueError):
    """Parameters are valid but fall outside the implemented closed forms."""


class DegenerateParameterError(FlowPriceError, ValueError):
    pass


class DegenerateBVPError(FlowPriceError, ArithmeticError):
    pass


class DomainError(FlowPriceError, ValueError):
    """Input lies outside the domain of an operation (time, shape, length)."""


class UnsupportedKernelError(FlowPriceError, ValueError):
    pass


class ConfigurationError(FlowPriceError, ValueError):
    pass


class MissingSeedError(FlowPriceError, ValueError):
    """No book snapshot at or before a window start to seed OFI."""


class UnderdeterminedError(FlowPriceError, ValueError):
    pass


class UndefinedRatioError(FlowPriceError, ZeroDivisionError):
    pass


class ConsistencyError(FlowPriceError, AssertionError):
    """An internal cross-check between two computation routes failed."""


class DataValidationError(FlowPriceError, ValueError):
    """A data row failed validation.

    ``row`` is the 1-based line number in the source file (header is line 1).
    """

    def __init__(self, message, row=None, path=None):
        self.row = row
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}"
        if row is not None:
            where += f" line {row}"
        super().__init__(f"{where}: {message}" if where else message)
