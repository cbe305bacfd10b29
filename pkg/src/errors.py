"""Exception hierarchy shared by all modules"""


class SomnusError(Exception):
    """Base class for every error raised by somnus"""

    exit_code = 1


class ConfigError(SomnusError):
    """Invalid or incomplete experiment configuration"""

    exit_code = 2


class DataError(SomnusError, ValueError):
    """Dataset could not be read or is inconsistent"""

    exit_code = 2


class MagicError(DataError):
    """IDX file has an unexpected magic number"""


class TruncatedError(DataError):
    """File ended before the declared payload"""


class CountMismatchError(DataError):
    """Image and label files disagree on the number of items"""


class FeatureFormatError(DataError):
    """Feature file header or body is malformed"""


class TaskSplitError(DataError):
    """Dataset cannot be split into the requested tasks"""


class DimensionError(SomnusError, ValueError):
    """Operand shapes do not agree"""


class DivergenceError(SomnusError, ArithmeticError):
    """Network state became non-finite during relaxation"""


class SnapshotError(SomnusError):
    """Weight snapshot is missing or unreadable"""

    exit_code = 2


class AnalysisError(SomnusError, ValueError):
    """Analysis precondition violated"""
