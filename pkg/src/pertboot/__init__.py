"""Perturbation bootstrap for linear-regression M-estimators.

Fit with :func:`m_estimate`, then resample with
:func:`run_perturbation_bootstrap` using one of the :class:`PivotKind`
studentizations.  Residual and wild bootstraps are included for comparison.
"""

__version__ = "0.1.0"

from .boot import (
    PivotKind,
    PivotSample,
    bootstrap_ci,
    perturb_pivot,
    perturb_replicate,
    perturbation_bootstrap_multi,
    run_perturbation_bootstrap,
    run_residual_bootstrap,
    run_wild_bootstrap,
)
from .errors import (
    BootstrapFailure,
    DegenerateStudentizationError,
    InvalidParameterError,
    NonConvergenceError,
    PertbootError,
    ReplicateRejected,
    SchemeValidationError,
    SingularDesignError,
    UnsupportedModelError,
    UnsupportedScoreError,
)
from .mest import MFit, RegressionData, SolverOptions, m_estimate
from .perturb import (
    WeightScheme,
    get_scheme,
    make_beta_half,
    make_custom_scheme,
    make_scaled_beta_half,
    validate_scheme,
)
from .score import ScoreFunction, get_score, make_least_squares, make_smooth_huber

__all__ = [
    "BootstrapFailure",
    "DegenerateStudentizationError",
    "InvalidParameterError",
    "NonConvergenceError",
    "PertbootError",
    "ReplicateRejected",
    "SchemeValidationError",
    "SingularDesignError",
    "UnsupportedModelError",
    "UnsupportedScoreError",
    "MFit",
    "PivotKind",
    "PivotSample",
    "RegressionData",
    "ScoreFunction",
    "SolverOptions",
    "WeightScheme",
    "bootstrap_ci",
    "get_score",
    "get_scheme",
    "m_estimate",
    "make_beta_half",
    "make_custom_scheme",
    "make_least_squares",
    "make_scaled_beta_half",
    "make_smooth_huber",
    "perturb_pivot",
    "perturb_replicate",
    "perturbation_bootstrap_multi",
    "run_perturbation_bootstrap",
    "run_residual_bootstrap",
    "run_wild_bootstrap",
    "validate_scheme",
]
