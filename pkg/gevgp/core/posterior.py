"""Posterior sampling, return levels and predictive checks.

Prediction at new sites follows a four-stage scheme:

1. draw (u, theta) from the joint Normal posterior;
2. krige a and b to the new sites from the drawn field, using the kernel
   hyperparameters of the same draw (a and b conditionally independent);
3. draw a new observation from the GEV at the new site;
4. summarize the predictive draws (mean and central interval).

Every new site owns a random stream keyed by the master seed and the
site's coordinates, so results do not depend on site order or on how the
work is split across threads.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import DomainError, GevGpError, NumericalError, SingularCovarianceError
from .gev import quantile_array
from .kernel import as_coords, condition_from_distances, distances
from .laplace import FitConfig, FitResult, joint_posterior, outer_optimize
from .model import Hypers, ModelSpec, SiteDataset, Transform

logger = logging.getLogger(__name__)

QUANTILE_METHOD = "linear"
DEFAULT_N_SIM = 10_000


def default_p_exp_grid() -> List[float]:
    """Expected coverage levels 0.10, 0.11, ..., 0.99."""
    return [round(0.10 + 0.01 * k, 2) for k in range(90)]


@dataclass(frozen=True)
class PosteriorDraws:
    m: int
    u_draws: np.ndarray
    theta_draws: np.ndarray
    seed: int
    theta_names: Tuple[str, ...]
    n_sites: int
    b_random: bool
    transform: Transform = Transform.NONE

    def __post_init__(self):
        if self.u_draws.shape[0] != self.m or self.theta_draws.shape[0] != self.m:
            raise DomainError("draw matrices must have m rows")

    @property
    def a_draws(self) -> np.ndarray:
        return self.u_draws[:, : self.n_sites]

    @property
    def b_draws(self) -> np.ndarray:
        if self.b_random:
            return self.u_draws[:, self.n_sites:]
        col = self.theta_draws[:, self.theta_names.index("b")]
        return np.repeat(col[:, None], self.n_sites, axis=1)

    @property
    def xi_draws(self) -> np.ndarray:
        if "s" in self.theta_names:
            return np.exp(self.theta_draws[:, self.theta_names.index("s")])
        return np.zeros(self.m)


@dataclass(frozen=True)
class ReturnLevelSummary:
    site: int
    prob_upper: float
    mean: float
    sd: float
    ci_lo: float
    ci_hi: float


def sample_joint(fit: FitResult, m: int, seed: int) -> PosteriorDraws:
    """``m`` draws of (u, theta) from the joint Normal posterior."""
    u_draws, theta_draws = joint_posterior(fit).sample(m, seed)
    return PosteriorDraws(
        m=m,
        u_draws=u_draws,
        theta_draws=theta_draws,
        seed=seed,
        theta_names=tuple(fit.theta_names),
        n_sites=fit.n_sites,
        b_random=fit.theta_hat.b_random,
        transform=fit.spec.transform,
    )


def _summarize(values: np.ndarray, level: float = 0.95) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Column-wise mean, sd and central ``level`` interval of a draw matrix."""
    tail = (1.0 - level) / 2.0
    mean = values.mean(axis=0)
    sd = values.std(axis=0, ddof=1) if values.shape[0] > 1 else np.zeros(values.shape[1])
    lo, hi = np.quantile(values, [tail, 1.0 - tail], axis=0, method=QUANTILE_METHOD)
    return mean, sd, lo, np.maximum(hi, lo)


def return_level_draws(draws: PosteriorDraws, prob_upper: float, sites: Optional[Sequence[int]] = None) -> np.ndarray:
    """Per-draw return levels on the original data scale, shape (m, n_sites)."""
    if not (0.0 < prob_upper < 1.0):
        raise DomainError(f"prob_upper must lie in (0, 1), got {prob_upper}")
    idx = np.arange(draws.n_sites) if sites is None else np.asarray(sites, dtype=int)
    if idx.size and (idx.min() < 0 or idx.max() >= draws.n_sites):
        raise DomainError(f"site index out of range [0, {draws.n_sites})")
    a = draws.a_draws[:, idx]
    b = draws.b_draws[:, idx]
    xi = draws.xi_draws[:, None]
    z = quantile_array(prob_upper, a, b, xi)
    if draws.transform == Transform.LOG:
        with np.errstate(over="ignore"):
            z = np.exp(z)
    return z


def return_levels(
    draws: PosteriorDraws,
    prob_upper: float,
    sites: Optional[Sequence[int]] = None,
) -> List[ReturnLevelSummary]:
    """Posterior summaries of the return level exceeded with probability ``prob_upper``."""
    idx = np.arange(draws.n_sites) if sites is None else np.asarray(sites, dtype=int)
    z = return_level_draws(draws, prob_upper, idx)
    mean, sd, lo, hi = _summarize(z)
    return [
        ReturnLevelSummary(site=int(site), prob_upper=prob_upper, mean=float(mean[k]), sd=float(sd[k]),
                           ci_lo=float(lo[k]), ci_hi=float(hi[k]))
        for k, site in enumerate(idx)
    ]


@dataclass(frozen=True)
class PredictionResult:
    """Predictive draws at new sites.

    ``a_star``/``b_star`` are latent draws on the modelling scale and
    ``y_star`` the predictive observations on the original scale, all of
    shape (kept draws, sites). Sites listed in ``errors`` hold NaN.
    """
    coords: np.ndarray
    a_star: np.ndarray
    b_star: np.ndarray
    y_star: np.ndarray
    draws: PosteriorDraws
    kept: np.ndarray
    p_exp: float
    errors: Dict[int, str] = field(default_factory=dict)

    @property
    def mean(self) -> np.ndarray:
        return self.y_star.mean(axis=0)

    def interval(self, p_exp: Optional[float] = None) -> Tuple[np.ndarray, np.ndarray]:
        """(L, U): the (1-p)/2 and 1-(1-p)/2 sample quantiles per site."""
        p = self.p_exp if p_exp is None else p_exp
        if not (0.0 < p < 1.0):
            raise DomainError(f"p_exp must lie in (0, 1), got {p}")
        tail = (1.0 - p) / 2.0
        lo, hi = np.quantile(self.y_star, [tail, 1.0 - tail], axis=0, method=QUANTILE_METHOD)
        return lo, np.maximum(hi, lo)

    @property
    def lower(self) -> np.ndarray:
        return self.interval()[0]

    @property
    def upper(self) -> np.ndarray:
        return self.interval()[1]


def site_stream(seed: int, coord: np.ndarray) -> np.random.Generator:
    """Random stream for one site, keyed by the master seed and the site's coordinates."""
    bits = np.asarray(coord, dtype=np.float64).view(np.uint64)
    return np.random.default_rng([int(seed), int(bits[0]), int(bits[1])])


def _draw_hypers(template, theta_draws) -> List[Optional[Hypers]]:
    """Hyperparameters of each draw; None where the draw leaves the valid range."""
    hypers: List[Optional[Hypers]] = []
    for row in theta_draws:
        try:
            hypers.append(template.with_vector(row))
        except DomainError:
            hypers.append(None)
    return hypers


def _krige_draws(d_obs, d_new, values, kernels, workers: int):
    """Per-draw kriging mean/var; rows for failed or missing draws are NaN."""
    m, q = values.shape[0], d_new.shape[0]
    means = np.full((m, q), np.nan)
    variances = np.full((m, q), np.nan)

    def run(j):
        if kernels[j] is None:
            return
        try:
            mu, var = condition_from_distances(d_obs, d_new, values[j], kernels[j])
        except (SingularCovarianceError, FloatingPointError) as exc:
            logger.debug(f"kriging failed for draw {j}: {exc}")
            return
        means[j], variances[j] = mu, var

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run, range(m)))
    else:
        for j in range(m):
            run(j)
    return means, variances


def predict_new(
    fit: FitResult,
    data: SiteDataset,
    coords_new,
    m: int = DEFAULT_N_SIM,
    seed: int = 0,
    p_exp: float = 0.95,
    workers: int = 1,
) -> PredictionResult:
    """Posterior predictive draws and intervals at ``coords_new``."""
    if m < 1:
        raise DomainError(f"number of draws must be >= 1, got {m}")
    if not (0.0 < p_exp < 1.0):
        raise DomainError(f"p_exp must lie in (0, 1), got {p_exp}")
    coords_new = np.asarray(coords_new, dtype=float)
    if coords_new.ndim == 1:
        coords_new = coords_new.reshape(-1, 2)
    coords_new = as_coords(coords_new)
    if data.n_sites != fit.n_sites:
        raise DomainError(f"fit has {fit.n_sites} sites but data has {data.n_sites}")
    q = coords_new.shape[0]

    draws = sample_joint(fit, m, seed)
    theta = fit.theta_hat
    hypers = _draw_hypers(theta, draws.theta_draws)
    n_invalid = sum(h is None for h in hypers)
    if n_invalid:
        logger.warning(f"{n_invalid} of {m} hyperparameter draws are out of range; dropping them")

    errors: Dict[int, str] = {}
    valid = np.array([bool(np.all(np.isfinite(c))) for c in coords_new], dtype=bool)
    for i in np.flatnonzero(~valid):
        errors[int(i)] = "non-finite coordinates"
    good = np.flatnonzero(valid)

    d_obs = distances(data.coords, data.coords)
    d_new = distances(coords_new[good], data.coords) if good.size else np.zeros((0, data.n_sites))

    kernels_a = [None if h is None else h.kernel_a for h in hypers]
    a_mean, a_var = _krige_draws(d_obs, d_new, draws.a_draws, kernels_a, workers)
    if theta.b_random:
        kernels_b = [None if h is None else h.kernel_b for h in hypers]
        b_mean, b_var = _krige_draws(d_obs, d_new, draws.b_draws, kernels_b, workers)
    else:
        b_mean = np.repeat(draws.b_draws[:, :1], good.size, axis=1)
        b_var = np.zeros_like(b_mean)

    kept = np.all(np.isfinite(a_mean), axis=1) & np.all(np.isfinite(b_mean), axis=1)
    if not kept.any():
        raise NumericalError(f"none of the {m} posterior draws could be kriged to the new sites")
    if not kept.all():
        logger.warning(f"kriging failed for {int((~kept).sum())} of {m} posterior draws; dropping them")
    xi = draws.xi_draws[kept]
    m_kept = int(kept.sum())

    a_star = np.full((m_kept, q), np.nan)
    b_star = np.full((m_kept, q), np.nan)
    y_star = np.full((m_kept, q), np.nan)
    for k, i in enumerate(good):
        rng = site_stream(seed, coords_new[i])
        e_a = rng.standard_normal(m)[kept]
        e_b = rng.standard_normal(m)[kept]
        unif = rng.random(m)[kept]
        try:
            a_i = a_mean[kept, k] + np.sqrt(np.clip(a_var[kept, k], 0.0, None)) * e_a
            b_i = b_mean[kept, k] + np.sqrt(np.clip(b_var[kept, k], 0.0, None)) * e_b
            y_i = quantile_array(unif, a_i, b_i, xi)
            if fit.spec.transform == Transform.LOG:
                with np.errstate(over="ignore"):
                    y_i = np.exp(y_i)
            if not np.all(np.isfinite(y_i)):
                raise GevGpError("non-finite predictive draws")
        except GevGpError as exc:
            errors[int(i)] = str(exc)
            continue
        a_star[:, i], b_star[:, i], y_star[:, i] = a_i, b_i, y_i

    for i, msg in errors.items():
        logger.warning(f"prediction failed at new site {i}: {msg}")
    return PredictionResult(
        coords=coords_new,
        a_star=a_star,
        b_star=b_star,
        y_star=y_star,
        draws=draws,
        kept=kept,
        p_exp=p_exp,
        errors=errors,
    )


def coverage_check(
    fit: FitResult,
    data: SiteDataset,
    p_exp_grid: Optional[Sequence[float]] = None,
    m: int = DEFAULT_N_SIM,
    seed: int = 0,
    workers: int = 1,
) -> List[Tuple[float, float]]:
    """In-sample coverage: fraction of observations inside each predictive interval."""
    grid = default_p_exp_grid() if p_exp_grid is None else [float(p) for p in p_exp_grid]
    for p in grid:
        if not (0.0 < p < 1.0):
            raise DomainError(f"p_exp values must lie in (0, 1), got {p}")
    pred = predict_new(fit, data, data.coords, m, seed, workers=workers)
    observed = data.original_obs()
    rows = []
    for p in grid:
        lo, hi = pred.interval(p)
        inside = total = 0
        for i, obs in enumerate(observed):
            if i in pred.errors:
                continue
            inside += int(np.sum((obs >= lo[i]) & (obs <= hi[i])))
            total += obs.size
        rows.append((p, inside / total if total else math.nan))
    return rows


@dataclass(frozen=True)
class HoldoutReport:
    """Out-of-sample predictive check on held-out sites."""
    test_sites: np.ndarray
    mean: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    site_coverage: np.ndarray
    coverage: float
    p_exp: float
    fit: FitResult


def holdout_check(
    data: SiteDataset,
    spec: ModelSpec,
    n_test: Optional[int] = None,
    seed: int = 0,
    m: int = DEFAULT_N_SIM,
    p_exp: float = 0.95,
    config: Optional[FitConfig] = None,
) -> HoldoutReport:
    """Hold out random sites, fit on the rest and score the predictive intervals there.

    ``n_test`` defaults to 20% of the sites (at least one).
    """
    n = data.n_sites
    if n_test is None:
        n_test = max(1, int(round(0.2 * n)))
    if not (1 <= n_test < n):
        raise DomainError(f"n_test must lie in [1, {n - 1}], got {n_test}")
    rng = np.random.default_rng(seed)
    test = np.sort(rng.choice(n, size=n_test, replace=False))
    train = np.setdiff1d(np.arange(n), test)
    logger.info(f"holdout: fitting on {train.size} sites, testing on {test.size}")

    fit = outer_optimize(data.subset(train), spec, config=config)
    pred = predict_new(fit, fit.data, data.coords[test], m, seed, p_exp=p_exp,
                       workers=(config.workers if config else 1))
    lo, hi = pred.interval()
    observed = data.subset(test).original_obs()
    site_cov = np.array([
        np.mean((obs >= lo[k]) & (obs <= hi[k])) if k not in pred.errors else np.nan
        for k, obs in enumerate(observed)
    ])
    inside = sum(int(np.sum((obs >= lo[k]) & (obs <= hi[k])))
                 for k, obs in enumerate(observed) if k not in pred.errors)
    total = sum(obs.size for k, obs in enumerate(observed) if k not in pred.errors)
    coverage = inside / total if total else math.nan
    logger.info(f"holdout coverage at {p_exp:.2f}: {coverage:.3f}")
    return HoldoutReport(
        test_sites=test,
        mean=pred.mean,
        lower=lo,
        upper=hi,
        site_coverage=site_cov,
        coverage=coverage,
        p_exp=p_exp,
        fit=fit,
    )
