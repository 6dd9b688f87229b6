"""GEV and Gumbel distribution primitives.

Parameters follow the model's working scale: location ``a``, log-scale
``b`` (so the scale is ``exp(b)``) and a shape that is either
``LogShape(s)`` (shape ``exp(s) > 0``) or the Gumbel limit ``GUMBEL``.

The ``*_array`` functions are vectorized over numpy arrays and take the
shape on its original scale (``xi``, any real, 0 for Gumbel). They never
raise on support violations: the CDF saturates and the log-density
returns ``-inf``.
"""

import math
from dataclasses import dataclass
from typing import List, Union

import numpy as np

from .errors import DomainError

# |xi| below this uses the Gumbel branch.
XI_ZERO = 1e-12
# Largest magnitude accepted for log-scale parameters; exp overflows near 709.
LOG_LIMIT = 700.0


@dataclass(frozen=True)
class LogShape:
    """Positive GEV shape stored on the log scale."""
    s: float

    def __post_init__(self):
        if not (math.isfinite(self.s) and abs(self.s) <= LOG_LIMIT):
            raise DomainError(f"log-shape must be finite with magnitude <= {LOG_LIMIT}, got {self.s}")

    @property
    def xi(self) -> float:
        return math.exp(self.s)


@dataclass(frozen=True)
class GumbelZero:
    """Zero shape: the Gumbel (type I) distribution."""

    @property
    def xi(self) -> float:
        return 0.0


Shape = Union[LogShape, GumbelZero]
GUMBEL = GumbelZero()


@dataclass(frozen=True)
class GevParams:
    """Per-location GEV parameters (a, b = log scale, shape)."""
    a: float
    b: float
    shape: Shape = GUMBEL

    def __post_init__(self):
        if not (math.isfinite(self.a) and math.isfinite(self.b)):
            raise DomainError(f"GEV parameters must be finite, got a={self.a}, b={self.b}")

    @property
    def scale(self) -> float:
        return math.exp(self.b)

    @property
    def xi(self) -> float:
        return self.shape.xi

    @property
    def lower_bound(self) -> float:
        """Lower end of the support (``-inf`` for Gumbel)."""
        if self.xi > 0:
            return self.a - self.scale / self.xi
        return -math.inf


def _reduced(y, a, scale, xi):
    """Return (z, log w, inside) with w = 1 + xi*z."""
    z = (y - a) / scale
    if np.ndim(xi) == 0 and abs(xi) < XI_ZERO:
        return z, np.zeros_like(z), np.ones_like(z, dtype=bool)
    xz = xi * z
    inside = xz > -1.0
    logw = np.log1p(np.where(inside, xz, 0.0))
    return z, logw, inside


@np.errstate(over="ignore", divide="ignore", invalid="ignore")
def cdf_array(y, a, b, xi):
    """Vectorized CDF; saturates to 0/1 outside the support."""
    y, a, b = np.broadcast_arrays(np.asarray(y, float), np.asarray(a, float), np.asarray(b, float))
    scale = np.exp(b)
    if np.ndim(xi) == 0 and abs(xi) < XI_ZERO:
        return np.exp(-np.exp(-(y - a) / scale))
    xi = np.asarray(xi, float)
    z, logw, inside = _reduced(y, a, scale, xi)
    t = np.exp(-logw / np.where(np.abs(xi) < XI_ZERO, 1.0, xi))
    gumbel = np.exp(-np.exp(-z))
    out = np.where(np.abs(xi) < XI_ZERO, gumbel, np.exp(-t))
    # below the lower bound when xi > 0, above the upper bound when xi < 0
    outside = np.where(xi > 0, 0.0, 1.0)
    return np.where(inside | (np.abs(xi) < XI_ZERO), out, outside)


@np.errstate(over="ignore", divide="ignore", invalid="ignore")
def standardized_terms(z, xi):
    """Return (f, f', f'') of the standardized GEV log-density in z.

    ``f(z) = -(1 + 1/xi) log(1 + xi z) - (1 + xi z)^(-1/xi)``, with the
    Gumbel limit ``-z - exp(-z)``. Out of support: f = -inf, derivatives nan.
    """
    z = np.asarray(z, float)
    if np.ndim(xi) == 0 and abs(xi) < XI_ZERO:
        t = np.exp(-z)
        return -z - t, t - 1.0, -t
    xz = xi * z
    inside = xz > -1.0
    w = np.where(inside, 1.0 + xz, 1.0)
    logw = np.log1p(np.where(inside, xz, 0.0))
    t = np.exp(-logw / xi)
    f = -(1.0 + 1.0 / xi) * logw - t
    d1 = (t - 1.0 - xi) / w
    d2 = (1.0 + xi) * (xi - t) / w ** 2
    return (
        np.where(inside, f, -np.inf),
        np.where(inside, d1, np.nan),
        np.where(inside, d2, np.nan),
    )


def logpdf_array(y, a, b, xi):
    """Vectorized log-density; ``-inf`` outside the support."""
    y, a, b = np.broadcast_arrays(np.asarray(y, float), np.asarray(a, float), np.asarray(b, float))
    z = (y - a) / np.exp(b)
    f, _, _ = standardized_terms(z, xi)
    return -b + f


@np.errstate(over="ignore", divide="ignore", invalid="ignore")
def quantile_array(prob_upper, a, b, xi):
    """Upper-tail quantile (return level) without argument validation."""
    prob_upper = np.asarray(prob_upper, float)
    scale = np.exp(np.asarray(b, float))
    # log(-log(1 - p))
    ll = np.log(-np.log1p(-prob_upper))
    if np.ndim(xi) == 0 and abs(xi) < XI_ZERO:
        return np.asarray(a, float) - scale * ll
    xi = np.asarray(xi, float)
    safe = np.where(np.abs(xi) < XI_ZERO, 1.0, xi)
    gev = a + scale * np.expm1(-safe * ll) / safe
    return np.where(np.abs(xi) < XI_ZERO, a - scale * ll, gev)


def _check_finite(name: str, value: float) -> None:
    if not math.isfinite(value):
        raise DomainError(f"{name} must be finite, got {value}")


def gev_cdf(y: float, p: GevParams) -> float:
    """CDF of the GEV at ``y``; 0 below the lower support bound."""
    _check_finite("y", y)
    return float(cdf_array(y, p.a, p.b, p.xi))


def gev_logpdf(y: float, p: GevParams) -> float:
    """Log-density at ``y``; ``-inf`` outside the support."""
    _check_finite("y", y)
    return float(logpdf_array(y, p.a, p.b, p.xi))


def gev_quantile(prob_upper: float, p: GevParams) -> float:
    """Return level exceeded with probability ``prob_upper``."""
    if not (0.0 < prob_upper < 1.0):
        raise DomainError(f"prob_upper must lie in (0, 1), got {prob_upper}")
    return float(quantile_array(prob_upper, p.a, p.b, p.xi))


def gev_sample(p: GevParams, n: int, rng_seed) -> List[float]:
    """Draw ``n`` i.i.d. values by inverse-CDF sampling."""
    if n < 0:
        raise DomainError(f"sample size must be non-negative, got {n}")
    rng = np.random.default_rng(rng_seed)
    u = rng.random(n)
    return quantile_array(u, p.a, p.b, p.xi).tolist()


def gev_mean(p: GevParams) -> float:
    """Analytic mean (finite only for shape < 1)."""
    euler_gamma = 0.5772156649015329
    if p.xi == 0.0:
        return p.a + p.scale * euler_gamma
    if p.xi >= 1.0:
        return math.inf
    return p.a + p.scale * (math.gamma(1.0 - p.xi) - 1.0) / p.xi
