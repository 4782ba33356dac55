"""Exception types raised across the package."""


class OdeCoverError(Exception):
    """Base class for all package errors."""


class OracleOrderExceeded(OdeCoverError):
    """A derivative of ``f`` above the oracle's supported order was requested."""


class BoxExit(OdeCoverError):
    """The computed solution left the domain box."""

    def __init__(self, x, message=None):
        self.x = float(x)
        super().__init__(message or f"solution left the box at x={self.x:.6g}")


class StepUnderflow(OdeCoverError):
    """Adaptive step size fell below the allowed minimum."""


class HypothesisViolated(OdeCoverError):
    """A spot check found a derivative of ``f`` exceeding the unit bound."""


class DeltaOutOfRange(OdeCoverError, ValueError):
    """The scale ``delta`` lies outside the range a bound formula accepts."""


class GammaUnsupported(OdeCoverError, ValueError):
    """A rate function was requested at a ``gamma`` where it is not defined."""


class NoSolutionInRange(OdeCoverError):
    """The critical inequality has no solution in the bracket."""


class DomainError(OdeCoverError, ValueError):
    """Inputs fall outside the domain on which a quantity is defined."""


class DomainExceeded(OdeCoverError, ValueError):
    """Evaluation point lies beyond the guaranteed existence interval."""


class MaxIterations(OdeCoverError):
    """An iterative solver stopped without meeting its tolerance."""


class IntegrationFailure(OdeCoverError):
    """Numerical integration of a candidate model failed."""


class InsufficientData(OdeCoverError, ValueError):
    """Too few sample sizes or replications for a rate regression."""


class ExistenceIntervalWarning(UserWarning):
    """Evaluation extends past the guaranteed existence interval."""


class LipschitzWarning(UserWarning):
    """A sampled difference quotient exceeded the supplied Lipschitz constant."""
