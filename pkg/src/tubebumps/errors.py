"""Exception hierarchy shared by every module of the package."""


class TubeBumpsError(Exception):
    """Base class for all package errors."""


class NumericalFailure(TubeBumpsError):
    """A solver did not deliver a result within its contract."""


# geometry
class CurveError(TubeBumpsError):
    pass


class SelfIntersection(CurveError):
    pass


class DegenerateTangent(CurveError):
    pass


class ClosureMismatch(CurveError):
    pass


class ChainError(TubeBumpsError):
    pass


class OrderViolation(ChainError):
    pass


class OddChainOnClosedCurve(ChainError):
    pass


class RangeViolation(TubeBumpsError):
    pass


# discretization
class ResolutionError(TubeBumpsError):
    pass


class CurvatureTooLarge(TubeBumpsError):
    pass


class IndefiniteOperator(NumericalFailure):
    pass


class SolverDivergence(NumericalFailure):
    pass


class ConvergenceFailure(NumericalFailure):
    pass


# limit profile
class PreconditionError(TubeBumpsError):
    pass


class NewtonDivergence(NumericalFailure):
    pass


class CollapseToZero(NumericalFailure):
    pass


class WindowUnderflow(NumericalFailure):
    pass


class DegeneracySuspected(NumericalFailure):
    pass


# ansatz
class WindowOverflow(TubeBumpsError):
    pass


class IndefiniteWindow(NumericalFailure):
    pass


class SignViolation(NumericalFailure):
    pass


class SignPatternBroken(NumericalFailure):
    pass


# reduction
class ContractionFailure(NumericalFailure):
    pass


class LeftTrustRegion(NumericalFailure):
    pass


class StuckOnBoundary(NumericalFailure):
    pass


class ConfigError(TubeBumpsError):
    """Invalid run configuration; ``where`` names the offending section/key."""

    def __init__(self, message, where=None):
        self.where = where
        super().__init__(f"[{where}] {message}" if where else message)
