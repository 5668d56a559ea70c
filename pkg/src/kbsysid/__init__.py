"""Kernel-based impulse-response identification with unknown initial conditions.

The impulse response gets a stable-spline (TC) Gaussian prior.  The unknown
past inputs are either set to zero, dropped, estimated, or replaced by their
conditional law under a known ARMA input model, with hyperparameters fitted by
EM on the marginal likelihood.
"""
from .arma import ArmaModel, InputConditioning, condition_initial, input_covariance, simulate
from .benchmark import BenchmarkConfig, RunRecord, run_estimator, run_monte_carlo, summarize
from .em import (
    EmOptions,
    EstimationResult,
    run_condmean,
    run_fixed_ic,
    run_joint,
    run_modless,
    run_truncated,
)
from .errors import DegenerateError, NumericalError, SizeError, UndefinedScoreError
from .kernel import Hyperparameters, factorization, kernel_matrix
from .model import Dataset, build_regressor, convolve, fit_score
from .posterior import estimate_noise_variance, log_marginal_likelihood, posterior_moments

__version__ = "0.1.0"

__all__ = [
    "ArmaModel", "InputConditioning", "condition_initial", "input_covariance", "simulate",
    "BenchmarkConfig", "RunRecord", "run_estimator", "run_monte_carlo", "summarize",
    "EmOptions", "EstimationResult", "run_condmean", "run_fixed_ic", "run_joint", "run_modless", "run_truncated",
    "DegenerateError", "NumericalError", "SizeError", "UndefinedScoreError",
    "Hyperparameters", "factorization", "kernel_matrix",
    "Dataset", "build_regressor", "convolve", "fit_score",
    "estimate_noise_variance", "log_marginal_likelihood", "posterior_moments",
]
