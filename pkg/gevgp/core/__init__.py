"""Core package initialization."""

from .errors import (
    ConfigError,
    ConvergenceDiagnosticError,
    DataError,
    DomainError,
    GevGpError,
    IndefiniteHessianError,
    NonConvergenceError,
    NumericalError,
    SingularCovarianceError,
    SupportError,
    ValidationError,
)
from .events import Event, FitEndEvent, FitStartEvent, OuterStepEvent, PsdRepairEvent
from .gev import GUMBEL, GevParams, GumbelZero, LogShape, gev_cdf, gev_logpdf, gev_mean, gev_quantile, gev_sample
from .kernel import CovMatrix, KernelConfig, build_cov, gp_condition, kernel_eval, mvn_logpdf, mvn_sample
from .laplace import (
    FitConfig,
    FitDiagnostics,
    FitResult,
    InnerResult,
    JointNormal,
    LaplaceFitter,
    inner_optimize,
    joint_posterior,
    laplace_logml,
    outer_optimize,
)
from .model import (
    GaussianLikelihood,
    GevLikelihood,
    Hypers,
    LatentField,
    LatentModel,
    ModelSpec,
    NormalPrior,
    ShapeMode,
    SiteDataset,
    Transform,
    cross_deriv_u_theta,
    grad_u,
    hess_u,
    joint_logdensity,
)
from .posterior import (
    HoldoutReport,
    PosteriorDraws,
    PredictionResult,
    ReturnLevelSummary,
    coverage_check,
    holdout_check,
    predict_new,
    return_levels,
    sample_joint,
)
from .settings import RunConfig

__all__ = [
    # Errors
    "ConfigError",
    "ConvergenceDiagnosticError",
    "DataError",
    "DomainError",
    "GevGpError",
    "IndefiniteHessianError",
    "NonConvergenceError",
    "NumericalError",
    "SingularCovarianceError",
    "SupportError",
    "ValidationError",
    # Events
    "Event",
    "FitEndEvent",
    "FitStartEvent",
    "OuterStepEvent",
    "PsdRepairEvent",
    # GEV
    "GUMBEL",
    "GevParams",
    "GumbelZero",
    "LogShape",
    "gev_cdf",
    "gev_logpdf",
    "gev_mean",
    "gev_quantile",
    "gev_sample",
    # Kernel
    "CovMatrix",
    "KernelConfig",
    "build_cov",
    "gp_condition",
    "kernel_eval",
    "mvn_logpdf",
    "mvn_sample",
    # Model
    "GaussianLikelihood",
    "GevLikelihood",
    "Hypers",
    "LatentField",
    "LatentModel",
    "ModelSpec",
    "NormalPrior",
    "ShapeMode",
    "SiteDataset",
    "Transform",
    "cross_deriv_u_theta",
    "grad_u",
    "hess_u",
    "joint_logdensity",
    # Fit
    "FitConfig",
    "FitDiagnostics",
    "FitResult",
    "InnerResult",
    "JointNormal",
    "LaplaceFitter",
    "inner_optimize",
    "joint_posterior",
    "laplace_logml",
    "outer_optimize",
    # Posterior
    "HoldoutReport",
    "PosteriorDraws",
    "PredictionResult",
    "ReturnLevelSummary",
    "coverage_check",
    "holdout_check",
    "predict_new",
    "return_levels",
    "sample_joint",
    # Settings
    "RunConfig",
]
