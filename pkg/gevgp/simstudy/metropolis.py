"""Random-walk Metropolis reference sampler for small instances.

Targets ``exp(G(u; theta)) * pi(theta)`` on the stacked vector
``(u, theta)``. Many chains run side by side as numpy arrays; each sweep
updates one coordinate at a time in every chain. Proposal scales adapt
toward a 0.3 acceptance rate during the warm-up half and are frozen
afterwards.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from ..core.errors import ConvergenceDiagnosticError, DomainError
from ..core.kernel import DEFAULT_RELATIVE_JITTER, distances, kernel_from_distance
from ..core.model import (
    GEV_LIKELIHOOD,
    Hypers,
    Likelihood,
    ModelSpec,
    NormalPrior,
    SiteDataset,
    initial_latent,
)

logger = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)
TARGET_ACCEPTANCE = 0.3
ACCEPTANCE_BOUNDS = (0.1, 0.6)
RHAT_LIMIT = 1.1
MAX_DIM = 20
ADAPT_INTERVAL = 25


@dataclass(frozen=True)
class MetropolisReport:
    names: Tuple[str, ...]
    mean: np.ndarray
    sd: np.ndarray
    acceptance: np.ndarray
    rhat: np.ndarray
    step_scales: np.ndarray
    n_chains: int
    sweeps: int

    def summary(self, name: str) -> Tuple[float, float]:
        """(mean, sd) of one coordinate."""
        k = self.names.index(name)
        return float(self.mean[k]), float(self.sd[k])


class _BatchTarget:
    """Log target evaluated for all chains at once."""

    def __init__(self, data: SiteDataset, template: Hypers, likelihood: Likelihood,
                 prior: Optional[NormalPrior]):
        self.data = data
        self.template = template
        self.likelihood = likelihood
        self.prior = prior
        self.n = data.n_sites
        self.b_random = template.b_random
        self.dim_u = 2 * self.n if self.b_random else self.n
        self.names = template.names()
        self.shape_idx = 0 if "s" in self.names else None
        self.d = distances(data.coords, data.coords)
        self.y = data.y_flat
        self.idx = data.site_index

    def _kernel_offset(self) -> int:
        return 1 if self.shape_idx is not None else 0

    def _cov_logpdf(self, z: np.ndarray, log_sigma2: np.ndarray, log_lambda: np.ndarray, kernel) -> np.ndarray:
        jitter = kernel.jitter
        sigma2 = np.exp(log_sigma2)[:, None, None]
        lam = np.exp(log_lambda)[:, None, None]
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            cov = kernel_from_distance(self.d[None], sigma2, lam, kernel.form)
        nugget = DEFAULT_RELATIVE_JITTER * sigma2[:, 0, 0] if jitter is None else np.full(z.shape[0], jitter)
        cov = cov + nugget[:, None, None] * np.eye(self.n)
        out = np.full(z.shape[0], -np.inf)
        ok = np.all(np.isfinite(cov), axis=(1, 2))
        try:
            chol = np.linalg.cholesky(cov[ok])
            rows = np.flatnonzero(ok)
        except np.linalg.LinAlgError:
            rows_list, chols = [], []
            for k in np.flatnonzero(ok):
                try:
                    chols.append(np.linalg.cholesky(cov[k]))
                    rows_list.append(k)
                except np.linalg.LinAlgError:
                    continue
            if not rows_list:
                return out
            rows = np.asarray(rows_list)
            chol = np.stack(chols)
        w = np.linalg.solve(chol, z[rows][..., None])[..., 0]
        logdet = 2.0 * np.sum(np.log(np.diagonal(chol, axis1=1, axis2=2)), axis=1)
        out[rows] = -0.5 * self.n * LOG_2PI - 0.5 * logdet - 0.5 * np.sum(w * w, axis=1)
        return out

    def __call__(self, states: np.ndarray) -> np.ndarray:
        u, theta = states[:, : self.dim_u], states[:, self.dim_u:]
        k = self._kernel_offset()
        a = u[:, : self.n]
        if self.b_random:
            b = u[:, self.n:]
        else:
            b = np.repeat(theta[:, k + 2][:, None], self.n, axis=1)
        if self.shape_idx is not None:
            xi = np.exp(theta[:, self.shape_idx])[:, None]
        else:
            xi = 0.0

        with np.errstate(over="ignore", invalid="ignore"):
            b_obs = b[:, self.idx]
            z = (self.y - a[:, self.idx]) / np.exp(b_obs)
            f, _, _ = self.likelihood.standardized(z, xi)
            data_term = np.sum(f - b_obs, axis=1)
        data_term = np.where(np.isnan(data_term), -np.inf, data_term)

        prior_term = self._cov_logpdf(a, theta[:, k], theta[:, k + 1], self.template.kernel_a)
        if self.b_random:
            prior_term = prior_term + self._cov_logpdf(b, theta[:, k + 2], theta[:, k + 3], self.template.kernel_b)
        total = data_term + prior_term
        if self.prior is not None:
            total = total + self.prior(theta)
        return total


def _split_rhat(sums: np.ndarray, sq_sums: np.ndarray, count: int) -> np.ndarray:
    """Split-chain potential scale reduction from per-half running sums.

    ``sums``/``sq_sums`` have shape (2, chains, dim); ``count`` draws per half.
    """
    means = (sums / count).reshape(-1, sums.shape[-1])
    variances = (sq_sums.reshape(-1, sums.shape[-1]) - count * means ** 2) / (count - 1)
    within = variances.mean(axis=0)
    between = count * means.var(axis=0, ddof=1)
    var_plus = (count - 1) / count * within + between / count
    with np.errstate(divide="ignore", invalid="ignore"):
        rhat = np.sqrt(var_plus / within)
    return np.where(within > 0, rhat, 1.0)


def metropolis_reference(
    data: SiteDataset,
    spec: ModelSpec,
    n_steps: int = 1_000_000,
    step_scales: Optional[Sequence[float]] = None,
    seed: int = 0,
    n_chains: int = 50,
    theta_init: Optional[Hypers] = None,
    prior: Optional[NormalPrior] = None,
    likelihood: Optional[Likelihood] = None,
    check: bool = True,
) -> MetropolisReport:
    """Posterior mean and sd of every coordinate of (u, theta).

    ``n_steps`` counts sweeps summed over chains; the first half of each
    chain is warm-up. With ``check`` the run fails when a coordinate's
    acceptance rate leaves [0.1, 0.6] or its split R-hat exceeds 1.1.
    """
    if theta_init is None:
        theta_init = spec.initial_hypers(data)
    spec.check(theta_init)
    target = _BatchTarget(data, theta_init, likelihood or GEV_LIKELIHOOD, prior)
    dim = target.dim_u + len(target.names)
    if dim > MAX_DIM:
        raise DomainError(f"reference sampler is limited to {MAX_DIM} dimensions, got {dim}")
    if n_chains < 2:
        raise DomainError(f"at least 2 chains are required, got {n_chains}")
    sweeps = n_steps // n_chains
    if sweeps < 200:
        raise DomainError(f"n_steps={n_steps} gives {sweeps} sweeps per chain; at least 200 are required")
    warmup = sweeps // 2
    kept = sweeps - warmup
    half = kept // 2

    names = [f"a_{i}" for i in range(data.n_sites)]
    if target.b_random:
        names += [f"b_{i}" for i in range(data.n_sites)]
    names += target.names

    rng = np.random.default_rng(seed)
    x0 = np.concatenate([initial_latent(theta_init, data).stack(), theta_init.to_vector()])
    states = x0 + 0.1 * rng.standard_normal((n_chains, dim))
    logp = target(states)
    bad = ~np.isfinite(logp)
    states[bad] = x0
    logp[bad] = target(x0[None])[0]
    if not np.all(np.isfinite(logp)):
        raise DomainError("log target is not finite at the starting point")

    log_scales = np.log(np.full(dim, 0.2) if step_scales is None else np.asarray(step_scales, float))
    if log_scales.shape != (dim,):
        raise DomainError(f"step_scales must have length {dim}")
    window_accepts = np.zeros(dim)
    accepts = np.zeros(dim)
    sums = np.zeros((2, n_chains, dim))
    sq_sums = np.zeros((2, n_chains, dim))
    n_adapt = 0

    logger.info(f"metropolis: {n_chains} chains x {sweeps} sweeps over {dim} coordinates")
    for t in range(sweeps):
        for j in range(dim):
            proposal = states.copy()
            proposal[:, j] += np.exp(log_scales[j]) * rng.standard_normal(n_chains)
            logp_new = target(proposal)
            accept = np.log(rng.random(n_chains)) < (logp_new - logp)
            states[accept, j] = proposal[accept, j]
            logp[accept] = logp_new[accept]
            if t < warmup:
                window_accepts[j] += accept.mean()
            else:
                accepts[j] += accept.mean()

        if t < warmup and (t + 1) % ADAPT_INTERVAL == 0:
            n_adapt += 1
            rate = window_accepts / ADAPT_INTERVAL
            log_scales += (rate - TARGET_ACCEPTANCE) / math.sqrt(n_adapt)
            window_accepts[:] = 0.0
        elif t >= warmup:
            k = t - warmup
            if k < 2 * half:
                h = 0 if k < half else 1
                sums[h] += states
                sq_sums[h] += states ** 2

    acceptance = accepts / kept
    total = sums.sum(axis=(0, 1))
    count = 2 * half * n_chains
    mean = total / count
    var = (sq_sums.sum(axis=(0, 1)) - count * mean ** 2) / (count - 1)
    sd = np.sqrt(np.clip(var, 0.0, None))
    rhat = _split_rhat(sums, sq_sums, half)

    report = MetropolisReport(
        names=tuple(names),
        mean=mean,
        sd=sd,
        acceptance=acceptance,
        rhat=rhat,
        step_scales=np.exp(log_scales),
        n_chains=n_chains,
        sweeps=sweeps,
    )
    logger.info(
        f"metropolis done: acceptance in [{acceptance.min():.3f}, {acceptance.max():.3f}], "
        f"max split R-hat {rhat.max():.4f}"
    )
    if check:
        lo, hi = ACCEPTANCE_BOUNDS
        off = [names[j] for j in range(dim) if not (lo <= acceptance[j] <= hi)]
        if off:
            raise ConvergenceDiagnosticError(f"acceptance rate outside [{lo}, {hi}] for {', '.join(off)}")
        unmixed = [names[j] for j in range(dim) if rhat[j] > RHAT_LIMIT]
        if unmixed:
            raise ConvergenceDiagnosticError(f"split R-hat above {RHAT_LIMIT} for {', '.join(unmixed)}")
    return report
