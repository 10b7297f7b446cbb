"""Exception types raised by mnarec."""


class MnarError(Exception):
    """Base class for all package errors."""


class UndefinedEstimateError(MnarError, ValueError):
    """An estimator was asked for a value it does not define (e.g. 0/0)."""


class InfeasibleTargetError(MnarError, ValueError):
    """The observation model cannot hit the requested reveal fraction."""


class InstanceTooLargeError(MnarError, ValueError):
    """Exact enumeration was requested on too many cells."""


class FormatError(MnarError, ValueError):
    """A file could not be parsed.

    ``line`` is the 1-based line number when the problem is tied to one.
    """

    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}"
        super().__init__(f"{where}: {message}" if where else message)


class VersionMismatchError(FormatError):
    """A model file carries an unknown header or version."""


class TrainingDivergedError(MnarError, ArithmeticError):
    """The training objective became non-finite.

    Attributes
    ----------
    last_model
        The last parameter iterate with a finite objective.
    """

    def __init__(self, message, last_model=None):
        super().__init__(message)
        self.last_model = last_model
