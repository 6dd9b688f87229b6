"""Test configuration for pytest.

Shared fixtures for the gevgp test suite: small datasets and a builder
for synthetic fit results.
"""

import sys
from pathlib import Path

import numpy as np
import pytest

# Add project root to Python path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))


def pytest_configure(config):
    """Configure pytest with custom markers.

    Args:
        config: Pytest configuration object
    """
    config.addinivalue_line(
        "markers", "slow: mark test as slow running"
    )
    config.addinivalue_line(
        "markers", "integration: mark test as integration test"
    )


# Import after path setup
from gevgp.core.gev import GUMBEL, LogShape
from gevgp.core.kernel import KernelConfig
from gevgp.core.laplace import FitDiagnostics, FitResult
from gevgp.core.model import Hypers, LatentField, ModelSpec, SiteDataset


def make_diagnostics(**overrides) -> FitDiagnostics:
    values = dict(
        converged=True,
        stalled=False,
        outer_iterations=3,
        outer_evaluations=20,
        outer_grad_norm=1e-7,
        inner_iterations_at_mode=2,
        inner_grad_norm=1e-10,
        v_theta_repaired=False,
        v_theta_min_eigenvalue=1.0,
        wall_seconds=0.1,
        message="gradient tolerance reached",
    )
    values.update(overrides)
    return FitDiagnostics(**values)


def make_fit(
    data: SiteDataset,
    model: str = "M2",
    a_vals=None,
    b_vals=None,
    jitter=0.0,
    theta_var: float = 0.01,
    latent_var: float = 0.01,
) -> FitResult:
    """A FitResult with hand-chosen blocks (no optimization involved)."""
    spec = ModelSpec.named(model)
    n = data.n_sites
    kernel = KernelConfig(log_sigma2=0.0, log_lambda=0.0, jitter=jitter)
    shape = LogShape(-2.0) if spec.estimates_shape else GUMBEL
    if spec.b_random:
        theta = Hypers(shape=shape, kernel_a=kernel, kernel_b=kernel)
    else:
        theta = Hypers(shape=shape, kernel_a=kernel, b_fixed=0.0)
    a_vals = np.array([o.mean() for o in data.obs]) if a_vals is None else np.asarray(a_vals, float)
    if spec.b_random:
        b_vals = np.zeros(n) if b_vals is None else np.asarray(b_vals, float)
        u_hat = LatentField(a_vals=a_vals, b_vals=b_vals)
    else:
        u_hat = LatentField(a_vals=a_vals)
    dim_u = u_hat.stack().size
    dim_t = len(theta.names())
    return FitResult(
        spec=spec,
        theta_hat=theta,
        v_theta=theta_var * np.eye(dim_t),
        u_hat=u_hat,
        v_u=latent_var * np.eye(dim_u),
        j_u=np.zeros((dim_u, dim_t)),
        laplace_logml_at_mode=-12.5,
        diagnostics=make_diagnostics(),
        data=data,
    )


@pytest.fixture
def rng():
    """Seeded random generator."""
    return np.random.default_rng(20240607)


@pytest.fixture
def small_dataset():
    """Four sites on a unit square with three observations each."""
    coords = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    obs = (
        np.array([1.2, 0.4, 2.1]),
        np.array([0.8, 1.9, 1.1]),
        np.array([-0.3, 0.6, 1.4]),
        np.array([2.3, 1.0, 0.2]),
    )
    return SiteDataset(coords=coords, obs=obs)


@pytest.fixture
def single_site():
    """One site at the origin with the single observation y = 0."""
    return SiteDataset(coords=np.zeros((1, 2)), obs=(np.array([0.0]),))


@pytest.fixture
def fit_factory():
    return make_fit
