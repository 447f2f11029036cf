"""Simultaneous linear quantile regression with monotone B-spline priors."""

__version__ = "0.1.0"

from .bands import CredibleBand, coverage_experiment, fit_band, rmise
from .model import Dataset, DomainError, QuantileModel
from .model_select import FitResult, fit_models
from .sampler import ChainConfig, ProposalConfig, run_chain
from .simgen import Study1, Study2, generate
from .splines import MonotoneSpline, SplineBasis

__all__ = [
    "ChainConfig",
    "CredibleBand",
    "Dataset",
    "DomainError",
    "FitResult",
    "MonotoneSpline",
    "ProposalConfig",
    "QuantileModel",
    "SplineBasis",
    "Study1",
    "Study2",
    "coverage_experiment",
    "fit_band",
    "fit_models",
    "generate",
    "rmise",
    "run_chain",
]
