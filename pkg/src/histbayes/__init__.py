"""Bayesian evaluation of multi-channel binned counting models.

Workspaces are parsed from a strict JSON dialect into an immutable model;
constrained nuisance parameters get conjugate-updated priors derived in
closed form from their auxiliary measurements; posteriors are sampled with
gradient-based HMC or random-walk Metropolis-Hastings; chains come with
autocorrelation/ESS/R-hat diagnostics, predictive sampling, and a
rank-based posterior calibration check.
"""

from .diagnostics import (
    AcfReport,
    autocorrelation,
    effective_sample_size,
    required_thinning,
    split_rhat,
    thin,
)
from .distributions import Gamma, Normal, Uniform
from .errors import (
    CalibrationError,
    DimensionError,
    DivergenceSignal,
    DomainError,
    EmptyChainError,
    HistBayesError,
    ImproperPriorError,
    InitializationError,
    InsufficientDataError,
    MissingPriorError,
    NoFiniteThinningError,
    NonFiniteGradientError,
    SchemaError,
    ShapeError,
    ValidationError,
)
from .model import (
    ParameterSpace,
    ParamKind,
    Posterior,
    build_parameter_space,
    expected_rates,
    grad_log_posterior,
    log_likelihood_main,
    log_posterior_unnorm,
)
from .predictive import (
    CalibrationResult,
    PredictiveSamples,
    calibration_run,
    posterior_predictive,
    prior_predictive,
)
from .priors import (
    PriorSet,
    UrPrior,
    build_priors,
    gamma_conjugate_update,
    gamma_rescale_to_factor,
    gaussian_conjugate_update,
)
from .samplers import (
    Chain,
    SamplerConfig,
    Target,
    hmc_sample,
    leapfrog,
    mh_sample,
    run_chains,
    target_from_distributions,
)
from .workspace import (
    Channel,
    GaussAux,
    Modifier,
    ModifierKind,
    ModelSpec,
    ObservationSet,
    PoissonAux,
    Sample,
    ValidationFinding,
    parse_workspace,
    serialize_workspace,
    validate,
)

__version__ = "0.1.0"

__all__ = [
    "AcfReport", "CalibrationError", "CalibrationResult", "Chain", "Channel",
    "DimensionError", "DivergenceSignal", "DomainError", "EmptyChainError",
    "Gamma", "GaussAux", "HistBayesError", "ImproperPriorError",
    "InitializationError", "InsufficientDataError", "MissingPriorError",
    "ModelSpec", "Modifier", "ModifierKind", "NoFiniteThinningError",
    "NonFiniteGradientError", "Normal", "ObservationSet", "ParamKind",
    "ParameterSpace", "PoissonAux", "Posterior", "PredictiveSamples",
    "PriorSet", "Sample", "SamplerConfig", "SchemaError", "ShapeError",
    "Target", "Uniform", "UrPrior", "ValidationError", "ValidationFinding",
    "autocorrelation", "build_parameter_space", "build_priors",
    "calibration_run", "effective_sample_size", "expected_rates",
    "gamma_conjugate_update", "gamma_rescale_to_factor",
    "gaussian_conjugate_update", "grad_log_posterior", "hmc_sample",
    "leapfrog", "log_likelihood_main", "log_posterior_unnorm", "mh_sample",
    "parse_workspace", "posterior_predictive", "prior_predictive",
    "required_thinning", "run_chains", "serialize_workspace", "split_rhat",
    "target_from_distributions", "thin", "validate",
]
