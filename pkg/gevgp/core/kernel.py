"""Spatial covariance kernels and Gaussian-process linear algebra.

The default kernel decays exponentially in the Euclidean distance,
``sigma2 * exp(-d / lambda)``. The ``squared_exponential`` form
``sigma2 * exp(-d^2 / (2 lambda^2))`` is available through
``KernelConfig.form``.
"""

import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import List, Literal, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import cho_solve, lapack, solve_triangular
from scipy.spatial.distance import cdist

from .errors import DomainError, SingularCovarianceError
from .gev import LOG_LIMIT

KernelForm = Literal["exponential", "squared_exponential"]
KERNEL_FORMS = ("exponential", "squared_exponential")

# Default nugget, relative to the amplitude.
DEFAULT_RELATIVE_JITTER = 1e-6

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class KernelConfig:
    """Kernel hyperparameters on the log scale.

    ``jitter=None`` means the default nugget ``1e-6 * sigma2``.
    """
    log_sigma2: float = 0.0
    log_lambda: float = 0.0
    jitter: Optional[float] = None
    form: KernelForm = "exponential"

    def __post_init__(self):
        if not all(math.isfinite(v) and abs(v) <= LOG_LIMIT for v in (self.log_sigma2, self.log_lambda)):
            raise DomainError(
                f"kernel hyperparameters must be finite with magnitude <= {LOG_LIMIT}, got "
                f"log_sigma2={self.log_sigma2}, log_lambda={self.log_lambda}"
            )
        if self.jitter is not None and not (self.jitter >= 0.0):
            raise DomainError(f"jitter must be >= 0, got {self.jitter}")
        if self.form not in KERNEL_FORMS:
            raise DomainError(f"unknown kernel form: {self.form}")

    @property
    def sigma2(self) -> float:
        return math.exp(self.log_sigma2)

    @property
    def lam(self) -> float:
        return math.exp(self.log_lambda)

    @property
    def nugget(self) -> float:
        if self.jitter is None:
            return DEFAULT_RELATIVE_JITTER * self.sigma2
        return self.jitter

    def with_params(self, log_sigma2: float, log_lambda: float) -> "KernelConfig":
        """Copy with new hyperparameters, keeping jitter and form."""
        return replace(self, log_sigma2=float(log_sigma2), log_lambda=float(log_lambda))


def as_coords(coords) -> np.ndarray:
    """Coerce to an (n, 2) float array of finite coordinates."""
    arr = np.asarray(coords, dtype=float)
    if arr.ndim == 1 and arr.size == 2:
        arr = arr.reshape(1, 2)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise DomainError(f"coordinates must have shape (n, 2), got {arr.shape}")
    return arr


def distances(x1, x2) -> np.ndarray:
    """Pairwise Euclidean distances between two coordinate sets."""
    return cdist(as_coords(x1), as_coords(x2))


def kernel_from_distance(d, sigma2, lam, form: KernelForm = "exponential"):
    """Kernel values from distances; broadcasts over sigma2 and lam."""
    d = np.asarray(d, float)
    if form == "squared_exponential":
        return sigma2 * np.exp(-(d ** 2) / (2.0 * lam ** 2))
    return sigma2 * np.exp(-d / lam)


def kernel_matrix(x1, x2, cfg: KernelConfig) -> np.ndarray:
    """Cross-covariance K(x1, x2) without the nugget."""
    return kernel_from_distance(distances(x1, x2), cfg.sigma2, cfg.lam, cfg.form)


def kernel_eval(x1, x2, cfg: KernelConfig) -> float:
    """Kernel value between two sites."""
    x1 = np.asarray(x1, float)
    x2 = np.asarray(x2, float)
    if not (np.all(np.isfinite(x1)) and np.all(np.isfinite(x2))):
        raise DomainError("coordinates must be finite")
    d = float(np.hypot(*(x1 - x2)))
    return float(kernel_from_distance(d, cfg.sigma2, cfg.lam, cfg.form))


def cholesky_lower(matrix: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor; raises naming the failing leading minor."""
    factor, info = lapack.dpotrf(matrix, lower=1, clean=1)
    if info > 0:
        raise SingularCovarianceError(minor=int(info), dim=matrix.shape[0])
    if info < 0:
        raise DomainError(f"invalid matrix passed to Cholesky (argument {-info})")
    return factor


@dataclass(frozen=True)
class CovMatrix:
    """Cholesky-factorized covariance ``K + jitter * I``."""
    dim: int
    lower_factor: np.ndarray = field(repr=False)
    log_det: float

    @classmethod
    def from_matrix(cls, matrix: np.ndarray) -> "CovMatrix":
        factor = cholesky_lower(np.asarray(matrix, float))
        log_det = 2.0 * float(np.sum(np.log(np.diag(factor))))
        return cls(dim=factor.shape[0], lower_factor=factor, log_det=log_det)

    def whiten(self, z: np.ndarray) -> np.ndarray:
        """Solve ``L w = z``."""
        return solve_triangular(self.lower_factor, z, lower=True)

    def solve(self, z: np.ndarray) -> np.ndarray:
        """Solve ``(L L^T) x = z``."""
        return cho_solve((self.lower_factor, True), z)

    @cached_property
    def precision(self) -> np.ndarray:
        """Inverse covariance, via Cholesky solves."""
        inv = self.solve(np.eye(self.dim))
        return 0.5 * (inv + inv.T)

    def matrix(self) -> np.ndarray:
        return self.lower_factor @ self.lower_factor.T


def build_cov(coords, cfg: KernelConfig) -> CovMatrix:
    """Assemble ``K + jitter * I`` over ``coords`` and factorize it."""
    coords = as_coords(coords)
    if coords.shape[0] == 0:
        raise DomainError("at least one site is required")
    if not np.all(np.isfinite(coords)):
        raise DomainError("coordinates must be finite")
    k = kernel_matrix(coords, coords, cfg)
    k[np.diag_indices_from(k)] += cfg.nugget
    return CovMatrix.from_matrix(k)


def mvn_logpdf(z, cov: CovMatrix) -> float:
    """Zero-mean multivariate Normal log-density."""
    z = np.asarray(z, float)
    if z.shape != (cov.dim,):
        raise DomainError(f"vector of length {cov.dim} expected, got shape {z.shape}")
    w = cov.whiten(z)
    return -0.5 * cov.dim * LOG_2PI - 0.5 * cov.log_det - 0.5 * float(w @ w)


def mvn_sample(mean, cov: CovMatrix, n: int, rng_seed) -> np.ndarray:
    """``n`` draws of ``mean + L e``; returns an (n, dim) array."""
    mean = np.asarray(mean, float)
    if mean.shape != (cov.dim,):
        raise DomainError(f"mean of length {cov.dim} expected, got shape {mean.shape}")
    if n < 0:
        raise DomainError(f"sample size must be non-negative, got {n}")
    rng = np.random.default_rng(rng_seed)
    e = rng.standard_normal((n, cov.dim))
    return mean + e @ cov.lower_factor.T


def condition_from_distances(
    d_obs: np.ndarray,
    d_new: np.ndarray,
    values_obs: np.ndarray,
    cfg: KernelConfig,
) -> Tuple[np.ndarray, np.ndarray]:
    """Kriging mean and variance from precomputed distance matrices.

    ``d_obs`` is (n, n) between observed sites, ``d_new`` is (q, n) from
    new to observed sites.
    """
    k_oo = kernel_from_distance(d_obs, cfg.sigma2, cfg.lam, cfg.form)
    k_oo[np.diag_indices_from(k_oo)] += cfg.nugget
    cov = CovMatrix.from_matrix(k_oo)
    k_no = kernel_from_distance(d_new, cfg.sigma2, cfg.lam, cfg.form)
    v = cov.whiten(k_no.T)  # (n, q)
    mean = v.T @ cov.whiten(values_obs)
    prior_var = cfg.sigma2 + cfg.nugget
    var = prior_var - np.einsum("ij,ij->j", v, v)
    # variance below round-off of the prior variance is exactly zero
    var = np.where(var < 1e-10 * prior_var, 0.0, var)
    return mean, np.minimum(var, prior_var)


def gp_condition(
    coords_obs: Sequence,
    values_obs: Sequence[float],
    coords_new: Sequence,
    cfg: KernelConfig,
) -> Tuple[np.ndarray, np.ndarray]:
    """Zero-mean GP conditional mean and variance at each new site."""
    coords_obs = as_coords(coords_obs)
    coords_new = as_coords(coords_new)
    values_obs = np.asarray(values_obs, float)
    if values_obs.shape != (coords_obs.shape[0],):
        raise DomainError(
            f"{coords_obs.shape[0]} observed values expected, got shape {values_obs.shape}"
        )
    return condition_from_distances(
        distances(coords_obs, coords_obs),
        distances(coords_new, coords_obs),
        values_obs,
        cfg,
    )


def median_distance(coords) -> float:
    """Median pairwise distance between distinct sites (1.0 for one site)."""
    coords = as_coords(coords)
    if coords.shape[0] < 2:
        return 1.0
    d = distances(coords, coords)
    upper = d[np.triu_indices_from(d, k=1)]
    upper = upper[upper > 0]
    return float(np.median(upper)) if upper.size else 1.0
