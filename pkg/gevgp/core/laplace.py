"""Nested Laplace approximation.

The inner problem maximizes ``G(u; theta)`` over the latent field with a
damped Newton method. The outer problem maximizes the Laplace
approximation of the marginal likelihood

    log p(y | theta) ~= G(u_theta; theta) - 1/2 log|-H_theta| + dim(u)/2 log(2 pi)

over theta with BFGS. At the optimum the joint posterior of (u, theta) is
approximated by a single multivariate Normal.
"""

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Tuple

import numdifftools as nd
import numpy as np
from scipy.linalg import cho_solve, eigh

from .errors import (
    DomainError,
    GevGpError,
    IndefiniteHessianError,
    NonConvergenceError,
    SingularCovarianceError,
    SupportError,
)
from .events import Event, FitEndEvent, FitStartEvent, OuterStepEvent, PsdRepairEvent
from .kernel import KERNEL_FORMS, CovMatrix, cholesky_lower
from .model import (
    Hypers,
    LatentField,
    LatentModel,
    Likelihood,
    ModelSpec,
    NormalPrior,
    SiteDataset,
    cross_deriv_u_theta,
    initial_latent,
)
from .optim import bfgs_maximize, central_gradient

logger = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)

# Levenberg boost, relative to the largest diagonal entry of -H.
LEVENBERG_START = 1e-4
LEVENBERG_FACTOR = 10.0
MAX_BOOSTS = 16
ARMIJO_C = 1e-4
MAX_BACKTRACKS = 40
# Largest change of any latent coordinate in one Newton step.
MAX_NEWTON_STEP = 1.0


@dataclass(frozen=True)
class FitConfig:
    """Numerical knobs for a fit."""
    inner_tol: float = 1e-8
    inner_max_iter: int = 100
    outer_tol: float = 1e-6
    outer_max_iter: int = 500
    fd_step: float = 1e-5
    cross_step: float = 1e-4
    hessian_step: Optional[float] = None
    psd_floor: float = 1e-8
    max_theta_variance: float = 4.0
    workers: int = 1
    jitter: Optional[float] = None
    kernel_form: str = "exponential"
    prior: Optional[NormalPrior] = None
    likelihood: Optional[Likelihood] = None
    data_weight: float = 1.0

    def __post_init__(self):
        for name in ("inner_tol", "outer_tol", "fd_step", "cross_step", "psd_floor", "max_theta_variance"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise DomainError(f"{name} must be positive, got {value}")
        if self.inner_max_iter < 1 or self.outer_max_iter < 1:
            raise DomainError("iteration caps must be at least 1")
        if self.workers < 1:
            raise DomainError(f"workers must be >= 1, got {self.workers}")
        if self.hessian_step is not None and not self.hessian_step > 0:
            raise DomainError(f"hessian_step must be positive, got {self.hessian_step}")
        if self.kernel_form not in KERNEL_FORMS:
            raise DomainError(f"unknown kernel form: {self.kernel_form}")
        if not self.data_weight >= 0:
            raise DomainError(f"data_weight must be >= 0, got {self.data_weight}")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "inner_tol": self.inner_tol,
            "inner_max_iter": self.inner_max_iter,
            "outer_tol": self.outer_tol,
            "outer_max_iter": self.outer_max_iter,
            "fd_step": self.fd_step,
            "cross_step": self.cross_step,
            "hessian_step": self.hessian_step,
            "psd_floor": self.psd_floor,
            "max_theta_variance": self.max_theta_variance,
            "workers": self.workers,
            "jitter": self.jitter,
            "kernel_form": self.kernel_form,
            "prior": None if self.prior is None else {"mean": list(self.prior.mean), "sd": list(self.prior.sd)},
            "likelihood": None if self.likelihood is None else self.likelihood.name,
            "data_weight": self.data_weight,
        }


DEFAULT_CONFIG = FitConfig()


@dataclass(frozen=True)
class InnerResult:
    u_opt: LatentField
    neg_hess_factor: CovMatrix
    g_at_opt: float
    converged: bool
    iterations: int
    grad_norm: float


def _boost_scale(neg_hess: np.ndarray) -> float:
    return max(1.0, float(np.max(np.abs(np.diag(neg_hess)))))


def _next_boost(boost: float, scale: float) -> float:
    return LEVENBERG_START * scale if boost == 0.0 else boost * LEVENBERG_FACTOR


def _newton_direction(neg_hess: np.ndarray, grad: np.ndarray, boost: float) -> Tuple[np.ndarray, float]:
    """Solve ``(-H + boost I) d = g``, raising the boost until -H + boost I is PD.

    Past the Gershgorin bound the boosted matrix is strictly diagonally
    dominant, so the search always ends for a finite matrix.
    """
    if not np.all(np.isfinite(neg_hess)):
        raise IndefiniteHessianError("negative Hessian has non-finite entries")
    scale = _boost_scale(neg_hess)
    diag = np.diag(neg_hess)
    gershgorin = float(np.max(np.sum(np.abs(neg_hess), axis=1) - np.abs(diag) - diag))
    eye = np.eye(neg_hess.shape[0])
    while True:
        try:
            factor = cholesky_lower(neg_hess + boost * eye)
            return cho_solve((factor, True), grad), boost
        except SingularCovarianceError:
            if boost > LEVENBERG_FACTOR * max(gershgorin, scale):
                raise IndefiniteHessianError(
                    f"negative Hessian not positive definite after boost {boost:.3g}"
                ) from None
            boost = _next_boost(boost, scale)


def _cap_step(direction: np.ndarray) -> np.ndarray:
    largest = float(np.max(np.abs(direction))) if direction.size else 0.0
    if largest > MAX_NEWTON_STEP:
        return direction * (MAX_NEWTON_STEP / largest)
    return direction


def _backtrack(model: LatentModel, u, g_value, grad, direction) -> Optional[Tuple[np.ndarray, float]]:
    slope = float(grad @ direction)
    step = 1.0
    for _ in range(MAX_BACKTRACKS):
        trial = u + step * direction
        value = model.logdensity(trial)
        if math.isfinite(value) and value >= g_value + ARMIJO_C * step * slope:
            return trial, value
        step *= 0.5
    return None


def inner_optimize(
    theta: Hypers,
    data: SiteDataset,
    u_init: Optional[LatentField] = None,
    config: FitConfig = DEFAULT_CONFIG,
) -> InnerResult:
    """Find ``u_theta = argmax_u G(u; theta)``.

    Converged when ``max|grad| <= inner_tol * (1 + |G|)``.
    """
    model = LatentModel(theta, data, config.likelihood, config.data_weight)
    u = None
    if u_init is not None:
        u = u_init.stack()
        if u.shape != (model.dim,) or not math.isfinite(model.logdensity(u)):
            logger.debug("warm start rejected; using the default starting field")
            u = None
    if u is None:
        u = initial_latent(theta, data).stack()
    g_value = model.logdensity(u)
    if not math.isfinite(g_value):
        raise SupportError("starting latent field lies outside the GEV support")

    iterations = 0
    converged = False
    grad = model.gradient(u)
    while True:
        threshold = config.inner_tol * (1.0 + abs(g_value))
        grad_norm = float(np.max(np.abs(grad)))
        if grad_norm <= threshold:
            converged = True
            break
        if iterations >= config.inner_max_iter:
            raise NonConvergenceError(
                f"inner optimization did not converge in {config.inner_max_iter} iterations "
                f"(|grad|={grad_norm:.3g})",
                best=LatentField.from_stacked(u, data.n_sites, theta.b_random),
            )
        neg_hess = -model.hessian(u)
        scale = _boost_scale(neg_hess)
        boost = 0.0
        accepted = None
        for _ in range(MAX_BOOSTS):
            direction, boost = _newton_direction(neg_hess, grad, boost)
            accepted = _backtrack(model, u, g_value, grad, _cap_step(direction))
            if accepted is not None:
                break
            boost = _next_boost(boost, scale)
        iterations += 1
        if accepted is None:
            if grad_norm <= 100.0 * threshold:
                logger.debug(f"inner line search stalled at |grad|={grad_norm:.3g}; accepting")
                converged = True
                break
            raise NonConvergenceError(
                f"inner line search failed at |grad|={grad_norm:.3g}",
                best=LatentField.from_stacked(u, data.n_sites, theta.b_random),
            )
        u, g_value = accepted
        grad = model.gradient(u)

    try:
        factor = CovMatrix.from_matrix(-model.hessian(u))
    except SingularCovarianceError as exc:
        raise IndefiniteHessianError(f"negative Hessian at the mode is not positive definite: {exc}") from exc
    return InnerResult(
        u_opt=LatentField.from_stacked(u, data.n_sites, theta.b_random),
        neg_hess_factor=factor,
        g_at_opt=g_value,
        converged=converged,
        iterations=iterations,
        grad_norm=float(np.max(np.abs(grad))),
    )


def laplace_logml(
    theta: Hypers,
    data: SiteDataset,
    warm: Optional[LatentField] = None,
    config: FitConfig = DEFAULT_CONFIG,
) -> Tuple[float, InnerResult]:
    """Laplace approximation of ``log p(y | theta)``, including the 2 pi constant."""
    inner = inner_optimize(theta, data, warm, config)
    dim = inner.neg_hess_factor.dim
    value = inner.g_at_opt - 0.5 * inner.neg_hess_factor.log_det + 0.5 * dim * LOG_2PI
    return value, inner


def nearest_pd_inverse(
    neg_hessian: np.ndarray,
    floor: float,
    max_variance: float = math.inf,
) -> Tuple[np.ndarray, bool, float]:
    """Invert a symmetric matrix after clipping its eigenvalues.

    Eigenvalues are raised to at least ``floor`` and ``1 / max_variance``,
    so no direction of the inverse has variance above ``max_variance``.
    Returns (inverse, repaired, smallest eigenvalue before clipping);
    ``repaired`` is set when an eigenvalue fell below either bound.
    """
    sym = 0.5 * (neg_hessian + neg_hessian.T)
    eigvals, eigvecs = eigh(sym)
    min_eig = float(eigvals.min())
    lowest = max(floor, 1.0 / max_variance)
    repaired = min_eig < lowest
    clipped = np.maximum(eigvals, lowest)
    inverse = (eigvecs / clipped) @ eigvecs.T
    return 0.5 * (inverse + inverse.T), repaired, min_eig


def project_finite(neg_hessian: np.ndarray, max_variance: float) -> Tuple[np.ndarray, int]:
    """Replace non-finite entries of a negative Hessian.

    Off-diagonal entries become 0 and diagonal entries ``1 / max_variance``.
    Returns (matrix, number of replaced entries). Raises
    IndefiniteHessianError when no diagonal entry is finite.
    """
    matrix = np.array(neg_hessian, dtype=float)
    bad = ~np.isfinite(matrix)
    if not bad.any():
        return matrix, 0
    diag_bad = np.diag(bad)
    if diag_bad.all():
        raise IndefiniteHessianError("finite-difference Hessian has no finite curvature entry")
    matrix[bad] = 0.0
    idx = np.flatnonzero(diag_bad)
    matrix[idx, idx] = 1.0 / max_variance
    return matrix, int(bad.sum())


@dataclass
class FitDiagnostics:
    converged: bool
    stalled: bool
    outer_iterations: int
    outer_evaluations: int
    outer_grad_norm: float
    inner_iterations_at_mode: int
    inner_grad_norm: float
    v_theta_repaired: bool
    v_theta_min_eigenvalue: float
    wall_seconds: float
    message: str
    settings: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "converged": self.converged,
            "stalled": self.stalled,
            "outer_iterations": self.outer_iterations,
            "outer_evaluations": self.outer_evaluations,
            "outer_grad_norm": self.outer_grad_norm,
            "inner_iterations_at_mode": self.inner_iterations_at_mode,
            "inner_grad_norm": self.inner_grad_norm,
            "v_theta_repaired": self.v_theta_repaired,
            "v_theta_min_eigenvalue": self.v_theta_min_eigenvalue,
            "wall_seconds": self.wall_seconds,
            "message": self.message,
            "settings": dict(self.settings),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "FitDiagnostics":
        return cls(**data)


@dataclass(frozen=True)
class FitResult:
    """Posterior mode, curvature blocks and diagnostics of one fit."""
    spec: ModelSpec
    theta_hat: Hypers
    v_theta: np.ndarray
    u_hat: LatentField
    v_u: np.ndarray
    j_u: np.ndarray
    laplace_logml_at_mode: float
    diagnostics: FitDiagnostics
    data: Optional[SiteDataset] = None

    @property
    def theta_vec(self) -> np.ndarray:
        return self.theta_hat.to_vector()

    @property
    def theta_names(self) -> List[str]:
        return self.theta_hat.names()

    @property
    def n_sites(self) -> int:
        return self.u_hat.n_sites

    def latent_cov(self) -> np.ndarray:
        """Marginal posterior covariance of u: ``V_u + J_u V_theta J_u^T``."""
        cov = self.v_u + self.j_u @ self.v_theta @ self.j_u.T
        return 0.5 * (cov + cov.T)

    def latent_summary(self) -> Tuple[np.ndarray, np.ndarray, Optional[np.ndarray], Optional[np.ndarray]]:
        """Per-site posterior (a_mean, a_sd, b_mean, b_sd).

        With b fixed, ``b_mean`` is the fitted fixed effect at every site
        and ``b_sd`` its posterior sd.
        """
        n = self.n_sites
        sd = np.sqrt(np.clip(np.diag(self.latent_cov()), 0.0, None))
        a_mean, a_sd = self.u_hat.a_vals, sd[:n]
        if self.theta_hat.b_random:
            return a_mean, a_sd, self.u_hat.b_vals, sd[n:]
        j = self.theta_names.index("b")
        b_sd = math.sqrt(max(float(self.v_theta[j, j]), 0.0))
        return a_mean, a_sd, np.full(n, self.theta_hat.b_fixed), np.full(n, b_sd)


@dataclass(frozen=True)
class JointNormal:
    """Normal approximation of the joint posterior of (u, theta)."""
    mean: np.ndarray
    cov: np.ndarray
    factor: np.ndarray
    u_dim: int
    repaired: bool = False

    def sample(self, m: int, seed) -> Tuple[np.ndarray, np.ndarray]:
        """Return (u_draws, theta_draws), each with ``m`` rows."""
        if m < 1:
            raise DomainError(f"number of draws must be >= 1, got {m}")
        rng = np.random.default_rng(seed)
        e = rng.standard_normal((m, self.factor.shape[1]))
        draws = self.mean + e @ self.factor.T
        return draws[:, : self.u_dim], draws[:, self.u_dim:]


def joint_posterior(fit: FitResult) -> JointNormal:
    """Assemble the joint Normal from the fit's blocks and factor it once.

    Cholesky is tried first; a matrix that is only semidefinite (or
    slightly indefinite from round-off) is factored through its
    eigendecomposition with negative eigenvalues clipped to zero.
    """
    v_u, j_u, v_theta = fit.v_u, fit.j_u, fit.v_theta
    cross = j_u @ v_theta
    cov = np.block([[v_u + cross @ j_u.T, cross], [cross.T, v_theta]])
    cov = 0.5 * (cov + cov.T)
    mean = np.concatenate([fit.u_hat.stack(), fit.theta_vec])
    repaired = False
    try:
        factor = cholesky_lower(cov)
    except SingularCovarianceError:
        eigvals, eigvecs = eigh(cov)
        scale = max(1.0, float(np.max(np.abs(eigvals)))) if eigvals.size else 1.0
        if eigvals.min() < -1e-10 * scale:
            repaired = True
            logger.warning(f"joint posterior covariance not PSD (min eigenvalue {eigvals.min():.3g}); clipping")
        factor = eigvecs * np.sqrt(np.clip(eigvals, 0.0, None))
    return JointNormal(mean=mean, cov=cov, factor=factor, u_dim=v_u.shape[0], repaired=repaired)


class LaplaceFitter:
    """Outer optimization of the Laplace marginal with warm-started inner solves."""

    def __init__(self, spec: ModelSpec, config: Optional[FitConfig] = None):
        self.spec = spec
        self.config = config or DEFAULT_CONFIG
        self.subscribers: List[Callable[[Event], None]] = []
        self._warm: Optional[LatentField] = None

    def subscribe(self, callback: Callable[[Event], None]) -> Callable[[], None]:
        """Subscribe to fit events.

        Returns:
            Unsubscribe function
        """
        self.subscribers.append(callback)
        return lambda: self.subscribers.remove(callback)

    def _emit(self, event: Event) -> None:
        for callback in self.subscribers:
            try:
                callback(event)
            except Exception as e:
                logger.error(f"Error in fit event subscriber: {e}")

    def _prepare(self, data: SiteDataset) -> SiteDataset:
        if data.n_sites == 0:
            raise DomainError("dataset has no sites")
        if data.transform != self.spec.transform:
            logger.info(f"re-expressing data with transform={self.spec.transform.value} for model {self.spec.name}")
            return data.with_transform(self.spec.transform)
        return data

    def _log_posterior(self, template: Hypers, data: SiteDataset) -> Callable[[np.ndarray], float]:
        cfg = self.config

        def objective(vec: np.ndarray) -> float:
            try:
                theta = template.with_vector(vec)
                value, _ = laplace_logml(theta, data, self._warm, cfg)
            except GevGpError as exc:
                logger.debug(f"objective infeasible at theta={np.round(vec, 6).tolist()}: {exc}")
                return -math.inf
            if cfg.prior is not None:
                value += cfg.prior(np.asarray(vec, float))
            return value

        return objective

    def _theta_hessian(self, objective: Callable[[np.ndarray], float], x: np.ndarray) -> np.ndarray:
        """Finite-difference Hessian of the log posterior at ``x``."""
        return np.atleast_2d(nd.Hessian(objective, step=self.config.hessian_step)(x))

    def fit(self, data: SiteDataset, theta_init: Optional[Hypers] = None) -> FitResult:
        cfg = self.config
        data = self._prepare(data)
        if theta_init is None:
            theta_init = self.spec.initial_hypers(data, jitter=cfg.jitter, form=cfg.kernel_form)
        self.spec.check(theta_init)
        started = time.perf_counter()
        self._warm = None

        names = theta_init.names()
        x0 = theta_init.to_vector()
        self._emit(FitStartEvent(
            model=self.spec.name or "",
            n_sites=data.n_sites,
            n_obs=data.n_obs,
            theta_names=names,
            theta_init=x0.tolist(),
        ))
        logger.info(f"fitting {self.spec.name}: {data.n_sites} sites, {data.n_obs} observations, theta={names}")

        objective = self._log_posterior(theta_init, data)

        def gradient(vec):
            return central_gradient(objective, vec, cfg.fd_step, cfg.workers)

        def on_step(k, x, f, g):
            try:
                _, inner = laplace_logml(theta_init.with_vector(x), data, self._warm, cfg)
                self._warm = inner.u_opt
            except GevGpError:
                pass
            self._emit(OuterStepEvent(iteration=k, theta=x.tolist(), logml=f,
                                      grad_norm=float(np.max(np.abs(g)))))

        outcome = bfgs_maximize(objective, x0, gradient, tol=cfg.outer_tol,
                                max_iter=cfg.outer_max_iter, callback=on_step)
        if not outcome.converged:
            elapsed = time.perf_counter() - started
            self._emit(FitEndEvent(converged=False, logml=outcome.fun, iterations=outcome.iterations,
                                   wall_seconds=elapsed, message=outcome.message))
            raise NonConvergenceError(
                f"outer optimization did not converge: {outcome.message} "
                f"(|grad|={outcome.grad_norm:.3g} after {outcome.iterations} iterations)",
                best=outcome.x,
            )
        if outcome.stalled:
            logger.warning(f"outer optimization stalled at |grad|={outcome.grad_norm:.3g}; accepted as converged")

        theta_hat = theta_init.with_vector(outcome.x)
        logml, inner = laplace_logml(theta_hat, data, self._warm, cfg)
        self._warm = inner.u_opt

        neg_hessian, n_bad = project_finite(-self._theta_hessian(objective, outcome.x), cfg.max_theta_variance)
        if n_bad:
            logger.warning(f"finite-difference theta-Hessian has {n_bad} non-finite entries; projecting")
        v_theta, repaired, min_eig = nearest_pd_inverse(neg_hessian, cfg.psd_floor, cfg.max_theta_variance)
        repaired = repaired or n_bad > 0
        if repaired:
            logger.warning(
                f"negative theta-Hessian repaired (min eigenvalue {min_eig:.3g}); "
                f"variances bounded by {cfg.max_theta_variance}"
            )
            self._emit(PsdRepairEvent(target="v_theta", min_eigenvalue=min_eig))

        cross = cross_deriv_u_theta(theta_hat, data, inner.u_opt, cfg.likelihood, cfg.data_weight, cfg.cross_step)
        j_u = inner.neg_hess_factor.solve(cross)
        v_u = inner.neg_hess_factor.precision

        elapsed = time.perf_counter() - started
        diagnostics = FitDiagnostics(
            converged=True,
            stalled=outcome.stalled,
            outer_iterations=outcome.iterations,
            outer_evaluations=outcome.n_evals,
            outer_grad_norm=outcome.grad_norm,
            inner_iterations_at_mode=inner.iterations,
            inner_grad_norm=inner.grad_norm,
            v_theta_repaired=repaired,
            v_theta_min_eigenvalue=min_eig,
            wall_seconds=elapsed,
            message=outcome.message,
            settings=cfg.to_dict(),
        )
        self._emit(FitEndEvent(converged=True, logml=logml, iterations=outcome.iterations,
                               wall_seconds=elapsed, message=outcome.message))
        logger.info(f"fit converged in {outcome.iterations} iterations ({elapsed:.2f}s), logml={logml:.6f}")
        return FitResult(
            spec=self.spec,
            theta_hat=theta_hat,
            v_theta=v_theta,
            u_hat=inner.u_opt,
            v_u=v_u,
            j_u=j_u,
            laplace_logml_at_mode=logml,
            diagnostics=diagnostics,
            data=data,
        )


def outer_optimize(
    data: SiteDataset,
    spec: ModelSpec,
    theta_init: Optional[Hypers] = None,
    config: Optional[FitConfig] = None,
) -> FitResult:
    """Fit ``spec`` to ``data``: posterior mode of theta plus curvature blocks."""
    return LaplaceFitter(spec, config).fit(data, theta_init)
