"""Exception hierarchy shared by all regsir modules."""


class RegSIRError(Exception):
    """Base class for every error raised by regsir."""


class ModelEvaluationError(RegSIRError, ValueError):
    """A contact-rate law or vector field produced a non-finite value."""


class DomainError(RegSIRError, ValueError):
    """Inputs fall outside the region where an operation is defined."""


class AssumptionError(DomainError):
    """The endemic-existence condition (A4) fails for the given parameters."""


class IntegrationError(RegSIRError, RuntimeError):
    """Numerical integration failed.

    ``state`` and ``time`` carry the last accepted point, when known.
    """

    def __init__(self, message, state=None, time=None):
        super().__init__(message)
        self.state = state
        self.time = time


class DivergenceError(IntegrationError):
    """The step budget was exhausted or the solution blew up."""


class DataError(RegSIRError, ValueError):
    """An incidence file could not be parsed or is empty."""


class FitError(RegSIRError, RuntimeError):
    """Parameter estimation failed."""


class IdentifiabilityError(FitError):
    """The sensitivity matrix at the starting point is rank deficient."""
