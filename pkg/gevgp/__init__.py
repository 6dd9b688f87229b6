"""gevgp - Laplace-approximate Bayesian inference for spatial GEV models."""

__version__ = "0.1.0"

from .core import (
    FitConfig,
    FitResult,
    GevParams,
    Hypers,
    KernelConfig,
    LatentField,
    LaplaceFitter,
    LogShape,
    GUMBEL,
    ModelSpec,
    RunConfig,
    SiteDataset,
    # Operations
    coverage_check,
    gev_cdf,
    gev_logpdf,
    gev_quantile,
    gev_sample,
    holdout_check,
    laplace_logml,
    outer_optimize,
    predict_new,
    return_levels,
    sample_joint,
    # Errors
    GevGpError,
    NumericalError,
    ValidationError,
)
from .dataio import export_csv, grid_maxima, ingest_csv, load_fit, save_fit

__all__ = [
    # Types
    "FitConfig",
    "FitResult",
    "GevParams",
    "Hypers",
    "KernelConfig",
    "LatentField",
    "LaplaceFitter",
    "LogShape",
    "GUMBEL",
    "ModelSpec",
    "RunConfig",
    "SiteDataset",
    # Operations
    "coverage_check",
    "gev_cdf",
    "gev_logpdf",
    "gev_quantile",
    "gev_sample",
    "holdout_check",
    "laplace_logml",
    "outer_optimize",
    "predict_new",
    "return_levels",
    "sample_joint",
    # IO
    "export_csv",
    "grid_maxima",
    "ingest_csv",
    "load_fit",
    "save_fit",
    # Errors
    "GevGpError",
    "NumericalError",
    "ValidationError",
]
