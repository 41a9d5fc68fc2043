"""Weak-signal identification and inference for generalized linear models.

The pipeline: fit an unpenalized GLM, take one weighted-lasso step from it,
estimate per-covariate selection probabilities, classify covariates as
strong, weak, or noise, and build confidence intervals that switch between
a de-biased penalized estimator and the plain MLE by class.
"""

from __future__ import annotations

from .errors import (
    AllSelected,
    ConstantColumn,
    DataError,
    DegenerateDenominator,
    EmptyData,
    MissingResponse,
    NoConvergence,
    NonNumericCell,
    NotActive,
    NumericalError,
    ParseError,
    SeparationDetected,
    SingularInformation,
    SingularSystem,
    TooManyFailures,
    WsiError,
)
from .glm_core import (
    Dataset,
    GlmFamily,
    MleFit,
    fit_mle,
    log_likelihood,
    make_dataset,
    refit_at,
    score,
    standardize,
    weight_diagonal,
)
from .inference import (
    DebiasedQuantities,
    IntervalSet,
    bootstrap_ci,
    ci_mle,
    ci_strong,
    debiased_quantities,
    old_two_step_ci,
    two_step_ci,
    z_critical,
)
from .onestep_lasso import (
    OneStepFit,
    SelectedLambda,
    WorkingData,
    build_working_data,
    coordinate_descent,
    lambda_max,
    one_step_fit,
    select_lambda,
    soft_threshold,
)
from .selection_prob import (
    CovariateModel,
    MonteCarloProbability,
    SelectionProfile,
    approximate_selection_prob,
    estimated_selection_prob,
    selection_profile,
)
from .signal_id import (
    SignalClassification,
    Thresholds,
    calibrate_delta2,
    classify,
)
from .sim_harness import (
    DgpConfig,
    SimulationReport,
    coverage_summary,
    empirical_selection_prob,
    generate_dataset,
    report_to_json,
    report_to_tsv,
    run_monte_carlo,
)

__version__ = "0.1.0"

__all__ = [
    "AllSelected",
    "ConstantColumn",
    "CovariateModel",
    "DataError",
    "Dataset",
    "DebiasedQuantities",
    "DegenerateDenominator",
    "DgpConfig",
    "EmptyData",
    "GlmFamily",
    "IntervalSet",
    "MissingResponse",
    "MleFit",
    "MonteCarloProbability",
    "NoConvergence",
    "NonNumericCell",
    "NotActive",
    "NumericalError",
    "OneStepFit",
    "ParseError",
    "SelectedLambda",
    "SelectionProfile",
    "SeparationDetected",
    "SignalClassification",
    "SimulationReport",
    "SingularInformation",
    "SingularSystem",
    "Thresholds",
    "TooManyFailures",
    "WorkingData",
    "WsiError",
    "approximate_selection_prob",
    "bootstrap_ci",
    "build_working_data",
    "calibrate_delta2",
    "ci_mle",
    "ci_strong",
    "classify",
    "coordinate_descent",
    "coverage_summary",
    "debiased_quantities",
    "empirical_selection_prob",
    "estimated_selection_prob",
    "fit_mle",
    "generate_dataset",
    "lambda_max",
    "log_likelihood",
    "make_dataset",
    "old_two_step_ci",
    "one_step_fit",
    "refit_at",
    "report_to_json",
    "report_to_tsv",
    "run_monte_carlo",
    "score",
    "select_lambda",
    "selection_profile",
    "soft_threshold",
    "standardize",
    "two_step_ci",
    "weight_diagonal",
    "z_critical",
]
