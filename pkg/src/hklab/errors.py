"""Exception hierarchy shared by all modules."""


class HKError(Exception):
    """Base class for every error raised by hklab."""


class ShapeError(HKError, ValueError):
    pass


class InvalidDimension(HKError, ValueError):
    pass


class InvalidIndex(HKError, ValueError):
    pass


class PreconditionViolated(HKError, ValueError):
    pass


class NotQuaternionic(HKError, ValueError):
    """Complex spectrum does not split into equal pairs."""


class DegenerateTopEigenvalue(PreconditionViolated):
    pass


class DegenerateSpectrum(HKError, ValueError):
    pass


class OutsideCone(HKError, ValueError):
    pass


class NotAdmissible(HKError, ValueError):
    """A point left the cone; ``witness`` holds the offending grid index."""

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class GridError(HKError, ValueError):
    pass


class InvalidChi(HKError, ValueError):
    pass


class FormatError(HKError, ValueError):
    pass


class SolverError(HKError, RuntimeError):
    pass


class LineSearchFailed(SolverError):
    pass


class LinearSolveStalled(SolverError):
    pass


class NoAdmissibleStart(SolverError):
    pass


class MaxIterationsExceeded(SolverError):
    pass


class NoInteriorMin(HKError, ValueError):
    pass
