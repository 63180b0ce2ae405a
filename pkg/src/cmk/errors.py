"""Exception hierarchy shared by all modules."""


class CMKError(Exception):
    """Base class for every error raised by this package."""


class InvalidOrder(CMKError, ValueError):
    pass


class DimensionMismatch(CMKError, ValueError):
    pass


class UnsupportedGrid(CMKError, ValueError):
    pass


class InvalidResolution(CMKError, ValueError):
    pass


class NonpositiveSupport(CMKError, ValueError):
    pass


class NotInConeGammaK(CMKError, ValueError):
    pass


class InvalidHomotopyParameter(CMKError, ValueError):
    pass


class PositivityLost(CMKError, ValueError):
    pass


class NotApplicable(CMKError, ValueError):
    pass


class OutOfRange(CMKError, ValueError):
    pass


class MinkowskiNotApplicable(NotApplicable):
    pass


class SolverError(CMKError, RuntimeError):
    """Numerical failure inside a solve; carries the partial report if any."""

    def __init__(self, message, report=None, u=None):
        super().__init__(message)
        self.report = report
        self.u = u


class AdmissibleStartRequired(SolverError):
    pass


class StepCollapse(SolverError):
    pass


class NoConvergence(SolverError):
    pass


class ContinuationStuck(SolverError):
    """Raised when the homotopy step underflows.

    ``last_t`` and ``u`` hold the last parameter value that converged.
    """

    def __init__(self, message, report=None, u=None, last_t=None):
        super().__init__(message, report=report, u=u)
        self.last_t = last_t
