"""Exception hierarchy shared by all modules."""


class VarSbmError(Exception):
    """Base class for every error raised by this package."""


class ParameterError(VarSbmError, ValueError):
    """Invalid model or configuration parameter."""


class RangeError(ParameterError):
    """A derived quantity left its admissible range."""


class ConsistencyError(VarSbmError, ValueError):
    """Inputs are individually valid but inconsistent with each other."""


class CapacityError(VarSbmError):
    """The requested exact computation is too large to run."""


class NumericalError(VarSbmError, ArithmeticError):
    """A numerical routine failed or produced non-finite output."""


class DegenerateEvaluationError(VarSbmError, ValueError):
    """An evaluation metric is undefined on the given inputs."""


class DataError(VarSbmError, ValueError):
    """A data file could not be parsed."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(where + message)
