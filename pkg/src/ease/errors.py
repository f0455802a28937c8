"""Exception hierarchy.

The three top-level families map onto CLI exit codes: configuration (2),
data (3), numerical (4).
"""


class EaseError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(EaseError, ValueError):
    pass


class DataError(EaseError, ValueError):
    pass


class NumericalError(EaseError, ArithmeticError):
    pass


class ParseError(DataError):
    pass


class EmptyLabeledError(DataError):
    pass


class DegenerateColumnError(DataError):
    def __init__(self, column, message=None):
        self.column = column
        super().__init__(message or f"column {column!r} has zero variance")


class InfeasiblePartitionError(ConfigError):
    pass


class RankDeficientError(NumericalError):
    def __init__(self, message, columns=()):
        self.columns = tuple(columns)
        super().__init__(message)


class SingularSystemError(NumericalError):
    pass


class IllConditionedError(NumericalError):
    pass


class AsymmetricMatrixError(NumericalError):
    pass


class DegenerateSlicingError(NumericalError):
    pass


class NoValidBandwidthError(NumericalError):
    pass


class UnsupportedInferenceError(ConfigError):
    pass
