"""Exposure-duration varying coefficient models for stratified count data."""

from .data import AnalyticDataset, DatasetError, ExposureUnit, Role, Stratum, validate_dataset
from .diagnostics import diagnostics, ess_bulk, split_rhat
from .frequentist import conditional_mle
from .gp import GPHyperparameters, KernelSpec, build_covariance, cholesky_with_jitter, noncentered_transform
from .grid import CoefficientGrid, LagCoefficientGrid
from .hmc import PosteriorDraws, SamplerConfig, leapfrog, run_hmc
from .io import VERSION as __version__
from .likelihood import ParameterSet, conditional_log_likelihood, log_likelihood_gradient
from .posterior import PosteriorModel, log_posterior
from .priors import PriorSpec, application_priors, resolve_priors, simulation_priors
from .summaries import (
    classify_direction,
    cumulative_rr_no_covariates,
    cumulative_rr_with_covariates,
    posterior_mean_ci,
    rate_ratio,
)

__all__ = [
    "AnalyticDataset",
    "CoefficientGrid",
    "DatasetError",
    "ExposureUnit",
    "GPHyperparameters",
    "KernelSpec",
    "LagCoefficientGrid",
    "ParameterSet",
    "PosteriorDraws",
    "PosteriorModel",
    "PriorSpec",
    "Role",
    "SamplerConfig",
    "Stratum",
    "__version__",
    "application_priors",
    "build_covariance",
    "cholesky_with_jitter",
    "classify_direction",
    "conditional_log_likelihood",
    "conditional_mle",
    "cumulative_rr_no_covariates",
    "cumulative_rr_with_covariates",
    "diagnostics",
    "ess_bulk",
    "leapfrog",
    "log_likelihood_gradient",
    "log_posterior",
    "noncentered_transform",
    "posterior_mean_ci",
    "rate_ratio",
    "resolve_priors",
    "run_hmc",
    "simulation_priors",
    "split_rhat",
    "validate_dataset",
]
