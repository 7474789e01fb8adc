"""
Exceptions raised by the MEWLS kernels, the continuation driver and the data layer
"""


class MewlsError(Exception):
    """
    Base class of all errors raised by this package
    """


class SingularMatrixError(MewlsError, ArithmeticError):
    """
    A pivot of a dense LU factorization fell below the pivot floor
    """


class RankDeficientError(MewlsError, ArithmeticError):
    """
    A (row-scaled) design matrix lost full column rank
    """


class ZeroResidualError(MewlsError, ArithmeticError):
    """
    The system is consistent, so the uniform-weight MSE is zero and no continuation
    is possible
    """


class NonPositiveWeightError(MewlsError, ValueError):
    """
    A weight vector handed to the stationarity map has a non-positive entry
    """


class NewtonDivergedError(MewlsError, ArithmeticError):
    """
    The Newton corrector hit its iteration cap or produced growing steps
    """


class OutOfRangeError(MewlsError, ValueError):
    """
    A requested MSE level lies outside the admissible or traced range
    """


class CoreSetRankDeficientError(MewlsError, ArithmeticError):
    """
    The rows of the classified core set do not have full column rank
    """


class InsufficientSamplesError(MewlsError, ValueError):
    """
    Too few trajectory samples fall into a requested fit range
    """


class NoFeasibleGridPointError(MewlsError, ValueError):
    """
    No simplex grid point attains the requested MSE level within the grid band
    """


class DimensionMismatchError(MewlsError, ValueError):
    """
    Array or file dimensions are inconsistent with each other
    """


class ParseError(MewlsError, ValueError):
    """
    A CSV file does not follow the expected grammar
    """

    def __init__(self, msg: str, *, line: int, column: int | None = None):
        """
        :param msg: Description of the problem
        :param line: The 1-based line number of the offending row
        :param column: The 1-based column number of the offending field, if known
        """
        location = f"line {line}" if column is None else f"line {line}, column {column}"
        super().__init__(f"{location}: {msg}")
        self.line = line
        self.column = column
