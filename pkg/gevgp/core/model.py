"""The hierarchical GEV-GP model.

Data layer: ``y_ik ~ GEV(a_i, exp(b_i), xi)``. Latent layer: independent
zero-mean GPs on ``a`` and (optionally) ``b``. ``G(u; theta)`` is the joint
log-density of data and latent field ``u = (a, b)`` at fixed
hyperparameters ``theta``.

All likelihoods here are location-scale families in the standardized
residual ``z = (y - a) / exp(b)``, so per-observation derivatives in
(a, b) follow from the derivatives of ``f(z)``:

    l    = -b + f(z)
    l_a  = -f' / sigma              l_b  = -1 - z f'
    l_aa = f'' / sigma^2            l_ab = (z f'' + f') / sigma
    l_bb = z f' + z^2 f''
"""

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import DomainError, SupportError
from .gev import GUMBEL, LogShape, Shape, quantile_array, standardized_terms
from .kernel import CovMatrix, KernelConfig, as_coords, build_cov, median_distance, mvn_logpdf

logger = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)


class ShapeMode(str, Enum):
    ESTIMATED_POSITIVE = "estimated_positive"
    FIXED_ZERO = "fixed_zero"


class Transform(str, Enum):
    NONE = "none"
    LOG = "log"


@dataclass(frozen=True)
class ModelSpec:
    """Which GEV parameters are spatial, whether the shape is estimated,
    and the data transformation."""
    b_random: bool = True
    shape: ShapeMode = ShapeMode.ESTIMATED_POSITIVE
    transform: Transform = Transform.NONE

    def __post_init__(self):
        object.__setattr__(self, "shape", ShapeMode(self.shape))
        object.__setattr__(self, "transform", Transform(self.transform))
        if self.name is None:
            raise DomainError(
                f"unsupported model: b_random={self.b_random}, shape={self.shape.value}, "
                f"transform={self.transform.value}"
            )

    @classmethod
    def named(cls, name: str) -> "ModelSpec":
        try:
            b_random, shape, transform = MODEL_VARIANTS[name.upper()]
        except KeyError:
            raise DomainError(
                f"unknown model {name!r}; expected one of {', '.join(MODEL_VARIANTS)}"
            ) from None
        return cls(b_random=b_random, shape=shape, transform=transform)

    @property
    def name(self) -> Optional[str]:
        for key, value in MODEL_VARIANTS.items():
            if value == (self.b_random, self.shape, self.transform):
                return key
        return None

    @property
    def estimates_shape(self) -> bool:
        return self.shape == ShapeMode.ESTIMATED_POSITIVE

    def initial_hypers(
        self,
        data: "SiteDataset",
        jitter: Optional[float] = None,
        form: str = "exponential",
        log_shape: float = -2.0,
    ) -> "Hypers":
        """Starting point for the outer optimization.

        s = -2, log sigma2 = 0, log lambda = log of the median pairwise
        site distance, fixed b = log of the sample sd of all observations.
        """
        log_lambda = math.log(median_distance(data.coords))
        kernel = KernelConfig(log_sigma2=0.0, log_lambda=log_lambda, jitter=jitter, form=form)
        shape: Shape = LogShape(log_shape) if self.estimates_shape else GUMBEL
        if self.b_random:
            return Hypers(shape=shape, kernel_a=kernel, kernel_b=kernel)
        sd = float(np.std(data.y_flat, ddof=1)) if data.n_obs > 1 else 0.0
        b_fixed = math.log(sd) if sd > 0 else 0.0
        return Hypers(shape=shape, kernel_a=kernel, b_fixed=b_fixed)

    def check(self, theta: "Hypers") -> None:
        """Raise unless ``theta`` has the structure this model requires."""
        if theta.b_random != self.b_random:
            raise DomainError(f"model {self.name} expects b_random={self.b_random}")
        if isinstance(theta.shape, LogShape) != self.estimates_shape:
            raise DomainError(f"model {self.name} expects shape mode {self.shape.value}")


MODEL_VARIANTS: Dict[str, Tuple[bool, ShapeMode, Transform]] = {
    "M1": (True, ShapeMode.ESTIMATED_POSITIVE, Transform.NONE),
    "M2": (True, ShapeMode.FIXED_ZERO, Transform.NONE),
    "M3": (True, ShapeMode.FIXED_ZERO, Transform.LOG),
    "M4": (False, ShapeMode.FIXED_ZERO, Transform.NONE),
    # a spatial, b and s fixed effects with s estimated
    "M4S": (False, ShapeMode.ESTIMATED_POSITIVE, Transform.NONE),
}


@dataclass(frozen=True)
class Hypers:
    """Fixed effects and kernel hyperparameters (theta)."""
    shape: Shape
    kernel_a: KernelConfig
    kernel_b: Optional[KernelConfig] = None
    b_fixed: Optional[float] = None

    def __post_init__(self):
        if (self.kernel_b is None) == (self.b_fixed is None):
            raise DomainError("exactly one of kernel_b and b_fixed must be given")
        if self.b_fixed is not None and not math.isfinite(self.b_fixed):
            raise DomainError(f"b_fixed must be finite, got {self.b_fixed}")

    @property
    def b_random(self) -> bool:
        return self.kernel_b is not None

    @property
    def xi(self) -> float:
        return self.shape.xi

    def names(self) -> List[str]:
        names = ["s"] if isinstance(self.shape, LogShape) else []
        names += ["log_sigma2_a", "log_lambda_a"]
        names += ["log_sigma2_b", "log_lambda_b"] if self.b_random else ["b"]
        return names

    def to_vector(self) -> np.ndarray:
        vec = [self.shape.s] if isinstance(self.shape, LogShape) else []
        vec += [self.kernel_a.log_sigma2, self.kernel_a.log_lambda]
        if self.b_random:
            vec += [self.kernel_b.log_sigma2, self.kernel_b.log_lambda]
        else:
            vec.append(self.b_fixed)
        return np.asarray(vec, dtype=float)

    def with_vector(self, vec: Sequence[float]) -> "Hypers":
        """Same structure (shape tag, jitter, kernel form), new values."""
        vec = [float(v) for v in vec]
        if len(vec) != len(self.names()):
            raise DomainError(f"theta vector of length {len(self.names())} expected, got {len(vec)}")
        i = 0
        shape: Shape = self.shape
        if isinstance(self.shape, LogShape):
            shape = LogShape(vec[0])
            i = 1
        kernel_a = self.kernel_a.with_params(vec[i], vec[i + 1])
        if self.b_random:
            return Hypers(shape=shape, kernel_a=kernel_a,
                          kernel_b=self.kernel_b.with_params(vec[i + 2], vec[i + 3]))
        return Hypers(shape=shape, kernel_a=kernel_a, b_fixed=vec[i + 2])


@dataclass(frozen=True)
class LatentField:
    """Latent values at the sites; stacks to ``u = (a, b)``."""
    a_vals: np.ndarray
    b_vals: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "a_vals", np.asarray(self.a_vals, dtype=float))
        if self.b_vals is not None:
            b_vals = np.asarray(self.b_vals, dtype=float)
            if b_vals.shape != self.a_vals.shape:
                raise DomainError("a_vals and b_vals must have the same length")
            object.__setattr__(self, "b_vals", b_vals)

    @property
    def n_sites(self) -> int:
        return self.a_vals.shape[0]

    def stack(self) -> np.ndarray:
        if self.b_vals is None:
            return self.a_vals.copy()
        return np.concatenate([self.a_vals, self.b_vals])

    @classmethod
    def from_stacked(cls, u: np.ndarray, n_sites: int, b_random: bool) -> "LatentField":
        u = np.asarray(u, dtype=float)
        expected = 2 * n_sites if b_random else n_sites
        if u.shape != (expected,):
            raise DomainError(f"stacked latent vector of length {expected} expected, got {u.shape}")
        if b_random:
            return cls(a_vals=u[:n_sites].copy(), b_vals=u[n_sites:].copy())
        return cls(a_vals=u.copy())


@dataclass(frozen=True)
class SiteDataset:
    """Site coordinates with ragged per-site observations.

    ``obs`` is on the modelling scale: with ``Transform.LOG`` the values
    are already logged. Use ``from_raw`` to apply the transform once.
    """
    coords: np.ndarray
    obs: Tuple[np.ndarray, ...]
    transform: Transform = Transform.NONE

    def __post_init__(self):
        coords = as_coords(self.coords)
        obs = tuple(np.atleast_1d(np.asarray(o, dtype=float)) for o in self.obs)
        if coords.shape[0] != len(obs):
            raise DomainError(f"{coords.shape[0]} sites but {len(obs)} observation lists")
        if not np.all(np.isfinite(coords)):
            raise DomainError("site coordinates must be finite")
        for i, o in enumerate(obs):
            if o.size == 0:
                raise DomainError(f"site {i} has no observations")
            if not np.all(np.isfinite(o)):
                raise DomainError(f"site {i} has non-finite observations")
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "obs", obs)
        object.__setattr__(self, "transform", Transform(self.transform))

    @classmethod
    def from_raw(cls, coords, raw_obs: Sequence[Sequence[float]], transform=Transform.NONE) -> "SiteDataset":
        """Build from original-scale observations, applying ``transform``."""
        transform = Transform(transform)
        obs = [np.atleast_1d(np.asarray(o, dtype=float)) for o in raw_obs]
        if transform == Transform.LOG:
            for i, o in enumerate(obs):
                if np.any(o <= 0):
                    raise DomainError(f"log transform needs positive observations (site {i})")
            obs = [np.log(o) for o in obs]
        return cls(coords=coords, obs=tuple(obs), transform=transform)

    @property
    def n_sites(self) -> int:
        return self.coords.shape[0]

    @property
    def n_obs(self) -> int:
        return int(self.counts.sum())

    @cached_property
    def counts(self) -> np.ndarray:
        return np.array([o.size for o in self.obs], dtype=int)

    @cached_property
    def y_flat(self) -> np.ndarray:
        return np.concatenate(self.obs)

    @cached_property
    def site_index(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_sites), self.counts)

    def original_obs(self) -> Tuple[np.ndarray, ...]:
        """Observations back on the original scale."""
        if self.transform == Transform.LOG:
            return tuple(np.exp(o) for o in self.obs)
        return self.obs

    def subset(self, indices: Sequence[int]) -> "SiteDataset":
        indices = list(indices)
        return SiteDataset(
            coords=self.coords[indices],
            obs=tuple(self.obs[i] for i in indices),
            transform=self.transform,
        )

    def with_transform(self, transform: Transform) -> "SiteDataset":
        """Re-express the same original-scale data under another transform."""
        return SiteDataset.from_raw(self.coords, self.original_obs(), transform)


class Likelihood(ABC):
    """Location-scale data layer in the standardized residual z."""

    name = "likelihood"

    @abstractmethod
    def standardized(self, z: np.ndarray, xi: float):
        """Return (f, f', f'') at z; f = -inf outside the support."""

    def logpdf(self, y, a, b, xi):
        z = (np.asarray(y, float) - a) / np.exp(b)
        f, _, _ = self.standardized(z, xi)
        return f - b

    @abstractmethod
    def sample(self, rng: np.random.Generator, a, b, xi) -> np.ndarray:
        """One draw per element of the broadcast (a, b, xi)."""


class GevLikelihood(Likelihood):
    """GEV data layer (Gumbel when xi = 0)."""

    name = "gev"

    def standardized(self, z, xi):
        return standardized_terms(z, xi)

    def sample(self, rng, a, b, xi):
        a, b, xi = np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float), np.asarray(xi, float))
        u = rng.random(a.shape)
        return quantile_array(u, a, b, xi)


class GaussianLikelihood(Likelihood):
    """Normal data layer ``y ~ N(a, exp(b)^2)``; ignores the shape."""

    name = "gaussian"

    def standardized(self, z, xi):
        z = np.asarray(z, float)
        with np.errstate(over="ignore", invalid="ignore"):
            return -0.5 * LOG_2PI - 0.5 * z * z, -z, -np.ones_like(z)

    def sample(self, rng, a, b, xi):
        a, b = np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float))
        return a + np.exp(b) * rng.standard_normal(a.shape)


GEV_LIKELIHOOD = GevLikelihood()


@dataclass(frozen=True)
class NormalPrior:
    """Independent Normal prior on the theta vector (off by default)."""
    mean: Sequence[float]
    sd: Sequence[float]

    def __post_init__(self):
        if len(self.mean) != len(self.sd) or any(not s > 0 for s in self.sd):
            raise DomainError("prior mean and sd must have equal length with positive sd")

    def __call__(self, theta):
        """Log-density of a theta vector, or of each row of a matrix."""
        sd = np.asarray(self.sd, float)
        z = (np.asarray(theta, float) - np.asarray(self.mean, float)) / sd
        out = np.sum(-0.5 * z * z - np.log(sd) - 0.5 * LOG_2PI, axis=-1)
        return float(out) if np.ndim(out) == 0 else out


@dataclass
class _ObsTerms:
    z: np.ndarray
    sigma: np.ndarray
    f: np.ndarray
    f1: np.ndarray
    f2: np.ndarray
    b_obs: np.ndarray


class LatentModel:
    """``G(u; theta)`` and its u-derivatives at a fixed theta.

    Covariance factorizations are computed once per instance; create one
    per theta value and reuse it across latent evaluations.
    """

    def __init__(
        self,
        theta: Hypers,
        data: SiteDataset,
        likelihood: Optional[Likelihood] = None,
        data_weight: float = 1.0,
    ):
        self.theta = theta
        self.data = data
        self.likelihood = likelihood or GEV_LIKELIHOOD
        self.data_weight = float(data_weight)
        self.n = data.n_sites
        self.xi = theta.xi
        self.cov_a: CovMatrix = build_cov(data.coords, theta.kernel_a)
        self.cov_b: Optional[CovMatrix] = (
            build_cov(data.coords, theta.kernel_b) if theta.b_random else None
        )
        self.dim = 2 * self.n if theta.b_random else self.n

    def split(self, u: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Latent vector to per-site (a, b) arrays."""
        u = np.asarray(u, dtype=float)
        if u.shape != (self.dim,):
            raise DomainError(f"latent vector of length {self.dim} expected, got {u.shape}")
        a = u[: self.n]
        if self.theta.b_random:
            return a, u[self.n:]
        return a, np.full(self.n, self.theta.b_fixed)

    def _obs_terms(self, u: np.ndarray) -> _ObsTerms:
        a, b = self.split(u)
        idx = self.data.site_index
        b_obs = b[idx]
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            sigma = np.exp(b_obs)
            z = (self.data.y_flat - a[idx]) / sigma
        f, f1, f2 = self.likelihood.standardized(z, self.xi)
        return _ObsTerms(z=z, sigma=sigma, f=f, f1=f1, f2=f2, b_obs=b_obs)

    def _site_sum(self, values: np.ndarray) -> np.ndarray:
        return np.bincount(self.data.site_index, weights=values, minlength=self.n)

    @property
    def prior_only(self) -> bool:
        return self.data_weight == 0.0

    def data_logdensity(self, u: np.ndarray) -> float:
        if self.prior_only:
            return 0.0
        terms = self._obs_terms(u)
        if not np.all(np.isfinite(terms.f)):
            return -math.inf
        return self.data_weight * float(np.sum(self._site_sum(terms.f - terms.b_obs)))

    def prior_logdensity(self, u: np.ndarray) -> float:
        a, b = self.split(u)
        value = mvn_logpdf(a, self.cov_a)
        if self.cov_b is not None:
            value += mvn_logpdf(b, self.cov_b)
        return value

    def logdensity(self, u: np.ndarray) -> float:
        """G(u; theta); ``-inf`` if any observation leaves the support."""
        data_term = self.data_logdensity(u)
        if data_term == -math.inf:
            return -math.inf
        return data_term + self.prior_logdensity(u)

    def _checked_terms(self, u: np.ndarray) -> _ObsTerms:
        terms = self._obs_terms(u)
        if not (np.all(np.isfinite(terms.f1)) and np.all(np.isfinite(terms.f2))):
            raise SupportError("observation outside the GEV support; derivatives undefined")
        return terms

    def gradient(self, u: np.ndarray) -> np.ndarray:
        a, b = self.split(u)
        if self.prior_only:
            prior = [-self.cov_a.solve(a)]
            if self.cov_b is not None:
                prior.append(-self.cov_b.solve(b))
            return np.concatenate(prior)
        terms = self._checked_terms(u)
        w = self.data_weight
        grad_a = w * self._site_sum(-terms.f1 / terms.sigma) - self.cov_a.solve(a)
        if self.cov_b is None:
            return grad_a
        grad_b = w * self._site_sum(-1.0 - terms.z * terms.f1) - self.cov_b.solve(b)
        return np.concatenate([grad_a, grad_b])

    def data_hessian_blocks(self, u: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Per-site (l_aa, l_ab, l_bb) summed over the site's observations."""
        if self.prior_only:
            zeros = np.zeros(self.n)
            return zeros, zeros.copy(), zeros.copy()
        t = self._checked_terms(u)
        w = self.data_weight
        haa = w * self._site_sum(t.f2 / t.sigma ** 2)
        hab = w * self._site_sum((t.z * t.f2 + t.f1) / t.sigma)
        hbb = w * self._site_sum(t.z * t.f1 + t.z ** 2 * t.f2)
        return haa, hab, hbb

    def hessian(self, u: np.ndarray) -> np.ndarray:
        haa, hab, hbb = self.data_hessian_blocks(u)
        n = self.n
        hess = np.zeros((self.dim, self.dim))
        hess[:n, :n] = -self.cov_a.precision
        hess[np.arange(n), np.arange(n)] += haa
        if self.cov_b is not None:
            hess[n:, n:] = -self.cov_b.precision
            hess[np.arange(n, 2 * n), np.arange(n, 2 * n)] += hbb
            hess[np.arange(n), np.arange(n, 2 * n)] = hab
            hess[np.arange(n, 2 * n), np.arange(n)] = hab
        return hess


def joint_logdensity(
    u: LatentField,
    theta: Hypers,
    data: SiteDataset,
    likelihood: Optional[Likelihood] = None,
    data_weight: float = 1.0,
) -> float:
    """G(u; theta): data log-likelihood plus GP prior log-densities."""
    return LatentModel(theta, data, likelihood, data_weight).logdensity(u.stack())


def grad_u(
    u: LatentField,
    theta: Hypers,
    data: SiteDataset,
    likelihood: Optional[Likelihood] = None,
    data_weight: float = 1.0,
) -> np.ndarray:
    """Analytic gradient of G in the stacked latent vector."""
    return LatentModel(theta, data, likelihood, data_weight).gradient(u.stack())


def hess_u(
    u: LatentField,
    theta: Hypers,
    data: SiteDataset,
    likelihood: Optional[Likelihood] = None,
    data_weight: float = 1.0,
) -> np.ndarray:
    """Analytic (dense, symmetric) Hessian of G in the stacked latent vector."""
    return LatentModel(theta, data, likelihood, data_weight).hessian(u.stack())


def cross_deriv_u_theta(
    theta: Hypers,
    data: SiteDataset,
    u_opt: LatentField,
    likelihood: Optional[Likelihood] = None,
    data_weight: float = 1.0,
    rel_step: float = 1e-4,
) -> np.ndarray:
    """d^2 G / du dtheta^T by central differences of the analytic gradient.

    Column j uses the step ``rel_step * (1 + |theta_j|)``.
    """
    vec = theta.to_vector()
    u = u_opt.stack()
    cross = np.zeros((u.size, vec.size))
    for j in range(vec.size):
        h = rel_step * (1.0 + abs(vec[j]))
        up, down = vec.copy(), vec.copy()
        up[j] += h
        down[j] -= h
        g_up = LatentModel(theta.with_vector(up), data, likelihood, data_weight).gradient(u)
        g_down = LatentModel(theta.with_vector(down), data, likelihood, data_weight).gradient(u)
        cross[:, j] = (g_up - g_down) / (2.0 * h)
    return cross


def initial_latent(theta: Hypers, data: SiteDataset) -> LatentField:
    """Starting latent field inside the support: a_i = min_k y_ik, b = 0 or b_fixed."""
    a0 = np.array([o.min() for o in data.obs])
    if theta.b_random:
        return LatentField(a_vals=a0, b_vals=np.zeros(data.n_sites))
    return LatentField(a_vals=a0)
