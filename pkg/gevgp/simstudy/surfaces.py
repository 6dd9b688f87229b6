"""Deterministic true surfaces, lattices and simulated datasets."""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from ..core.errors import DomainError
from ..core.gev import LogShape, Shape, quantile_array
from ..core.kernel import as_coords
from ..core.model import SiteDataset, Transform

logger = logging.getLogger(__name__)

Vector2 = Tuple[float, float]
Matrix2 = Tuple[Tuple[float, float], Tuple[float, float]]


@dataclass(frozen=True)
class SurfaceSpec:
    """Constants of the true location and log-scale surfaces.

    ``a(x) = c0 log(2 pi) + c1 log det S0 + c1 (x - m0)^T S0^-1 (x - m0) + c2``

    ``b(x) = d0 log{ w1 N(x; m1, S1) + w2 N(x; m2, S2) } + d1`` with the
    Gaussian bumps written without their 1/(2 pi) factor.
    """
    mu0: Vector2 = (4.0, 4.0)
    sigma0: Matrix2 = ((2.0, 0.0), (0.0, 2.0))
    mu1: Vector2 = (1.0, 0.0)
    sigma1: Matrix2 = ((0.5, 0.0), (0.0, 0.5))
    mu2: Vector2 = (8.0, 7.0)
    sigma2: Matrix2 = ((1.0, 0.0), (0.0, 1.0))
    a_log2pi_coef: float = -0.2
    a_quad_coef: float = -0.1
    a_offset: float = 6.0
    b_coef: float = 0.07
    b_weight1: float = 0.64
    b_weight2: float = 0.09
    b_offset: float = 0.14

    def __post_init__(self):
        for name in ("sigma0", "sigma1", "sigma2"):
            mat = np.asarray(getattr(self, name), float)
            if mat.shape != (2, 2) or np.any(np.linalg.eigvalsh(0.5 * (mat + mat.T)) <= 0):
                raise DomainError(f"{name} must be a 2x2 positive definite matrix")
        if self.b_weight1 <= 0 or self.b_weight2 <= 0:
            raise DomainError("bump weights must be positive")


def _quad_form(coords: np.ndarray, mu: Vector2, sigma: Matrix2) -> np.ndarray:
    diff = coords - np.asarray(mu, float)
    prec = np.linalg.inv(np.asarray(sigma, float))
    return np.einsum("ij,jk,ik->i", diff, prec, diff)


def true_surfaces(coords, spec: Optional[SurfaceSpec] = None) -> Tuple[np.ndarray, np.ndarray]:
    """True (a, b) at each coordinate pair."""
    spec = spec or SurfaceSpec()
    coords = as_coords(coords)
    if not np.all(np.isfinite(coords)):
        raise DomainError("coordinates must be finite")

    logdet0 = math.log(np.linalg.det(np.asarray(spec.sigma0, float)))
    a = (
        spec.a_log2pi_coef * math.log(2.0 * math.pi)
        + spec.a_quad_coef * logdet0
        + spec.a_quad_coef * _quad_form(coords, spec.mu0, spec.sigma0)
        + spec.a_offset
    )

    def log_bump(weight, mu, sigma):
        logdet = math.log(np.linalg.det(np.asarray(sigma, float)))
        return math.log(weight) - 0.5 * logdet - 0.5 * _quad_form(coords, mu, sigma)

    mix = np.logaddexp(
        log_bump(spec.b_weight1, spec.mu1, spec.sigma1),
        log_bump(spec.b_weight2, spec.mu2, spec.sigma2),
    )
    b = spec.b_coef * mix + spec.b_offset
    return a, b


def make_lattice(side: int, lo: float = 0.0, hi: float = 10.0) -> np.ndarray:
    """``side x side`` regular lattice on [lo, hi]^2, endpoints included.

    Row-major: the first coordinate varies slowest.
    """
    if side < 2:
        raise DomainError(f"lattice side must be >= 2, got {side}")
    if not (math.isfinite(lo) and math.isfinite(hi) and hi > lo):
        raise DomainError(f"lattice bounds must satisfy lo < hi, got [{lo}, {hi}]")
    grid = np.linspace(lo, hi, side)
    x, y = np.meshgrid(grid, grid, indexing="ij")
    return np.column_stack([x.ravel(), y.ravel()])


def simulate_from_params(
    coords,
    a: np.ndarray,
    b: np.ndarray,
    shape: Shape,
    n_per_site: Union[int, Sequence[int]] = 1,
    seed: int = 0,
    transform: Transform = Transform.NONE,
) -> SiteDataset:
    """Draw GEV values at every site from given parameters.

    ``n_per_site`` is a common count or one count per site. The values are
    on the modelling scale of ``transform``.
    """
    coords = as_coords(coords)
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    if a.shape != (coords.shape[0],) or b.shape != a.shape:
        raise DomainError("a and b must have one value per site")
    counts = np.broadcast_to(np.asarray(n_per_site, dtype=int), a.shape)
    if np.any(counts < 1):
        raise DomainError("every site needs at least one draw")
    rng = np.random.default_rng(seed)
    unif = rng.random(int(counts.sum()))
    values = quantile_array(unif, np.repeat(a, counts), np.repeat(b, counts), shape.xi)
    obs = np.split(values, np.cumsum(counts)[:-1])
    return SiteDataset(coords=coords, obs=tuple(obs), transform=transform)


def simulate_dataset(
    coords,
    surfaces: Optional[SurfaceSpec] = None,
    shape: Shape = LogShape(-2.0),
    n_per_site: int = 1,
    seed: int = 0,
) -> SiteDataset:
    """Simulate GEV data on the true surfaces (default log-shape -2)."""
    a, b = true_surfaces(coords, surfaces)
    data = simulate_from_params(coords, a, b, shape, n_per_site, seed)
    logger.info(f"simulated {data.n_obs} observations at {data.n_sites} sites (xi={shape.xi:.4g}, seed={seed})")
    return data
