"""
Error Types Module
Exception hierarchy shared by the numerical core, the data layer and the CLI
"""

from typing import Optional


class MvoprobitError(Exception):
    """Base class for every error raised by this package"""


# Configuration ---------------------------------------------------------------

class ConfigError(MvoprobitError, ValueError):
    """Invalid run configuration; `path` names the offending JSON location"""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class UsageError(MvoprobitError, ValueError):
    """Bad command-line usage"""


# Data ------------------------------------------------------------------------

class DataError(MvoprobitError, ValueError):
    """Problem with tabular input data"""

    def __init__(self, message: str, row: Optional[int] = None, column: Optional[str] = None):
        self.row = row
        self.column = column
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column '{column}'")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


class EmptyDataError(DataError):
    pass


class MissingColumnError(DataError):
    pass


class DataFormatError(DataError):
    pass


class OutcomeRangeError(DataError):
    pass


# Model and numerical kernel ---------------------------------------------------

class ModelError(MvoprobitError, ValueError):
    """Invalid model specification, parameters or numerical input"""


class ShapeError(ModelError):
    pass


class InvalidParameterError(ModelError):
    pass


class DegenerateCorrelationError(ModelError):
    pass


class InvalidBoundError(ModelError):
    pass


class InvalidCellError(ModelError):
    pass


class NumericalAssemblyError(ModelError):
    """Inclusion-exclusion produced a probability below the rounding tolerance"""


# Estimation ------------------------------------------------------------------

class EstimationError(MvoprobitError):
    """Failure while fitting or comparing models"""


class DegenerateOutcomeError(EstimationError, ValueError):
    pass


class BadStartError(EstimationError, ValueError):
    pass


class InvalidLikelihoodError(EstimationError, ValueError):
    pass


class MismatchedModelsError(EstimationError, ValueError):
    pass


class ConvergenceError(EstimationError):
    """Optimizer stopped before convergence and the run asked for strict handling"""


# Survey responses and indices ------------------------------------------------

class ResponseError(MvoprobitError, ValueError):
    """Invalid survey answers, stage labels, frequency bands or index input"""


class IncompleteResponseError(ResponseError):
    pass


class InconsistentResponseError(ResponseError):
    pass


class UnknownLabelError(ResponseError):
    pass


class UnknownBandError(ResponseError):
    pass


class UndefinedIndexError(ResponseError):
    pass


class InvalidMergeMapError(ResponseError):
    """Merge map that is empty, leaves an ordinal gap or reverses stage order"""


# Warnings --------------------------------------------------------------------

class SingularInformationWarning(RuntimeWarning):
    """Observed information is not positive definite; some SEs are absent"""


class LRStatisticWarning(RuntimeWarning):
    """Likelihood-ratio statistic was negative beyond rounding and got clamped"""
