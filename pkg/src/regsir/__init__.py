"""Regulated SIR epidemic model with adaptive social-distancing feedback."""
from .analysis import (
    adaptation_experiment,
    assign_u,
    check_assumptions,
    disease_free_state,
    endemic_state,
    fcd_experiment,
    identifiability_rank,
    lyapunov,
    r0,
    tikhonov_sweep,
)
from .dynamics import ContactRateLaw, EpidemicParams, MonodLaw
from .errors import (
    AssumptionError,
    DataError,
    DivergenceError,
    DomainError,
    FitError,
    IdentifiabilityError,
    IntegrationError,
    ModelEvaluationError,
    RegSIRError,
)
from .fitting import FitProblem, FitResult, fit, load_incidence
from .kernels import BACKEND
from .solver import IntegratorConfig, Trajectory, integrate, sample_daily

__version__ = "0.1.0"
