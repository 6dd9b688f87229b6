"""Test suite for simstudy.metropolis module.

The reference sampler is slow; everything beyond argument validation is
marked ``slow``.
"""

import numpy as np
import pytest

from gevgp.core.errors import DomainError
from gevgp.core.gev import GUMBEL
from gevgp.core.laplace import FitConfig, inner_optimize, outer_optimize
from gevgp.core.model import GaussianLikelihood, ModelSpec, NormalPrior, SiteDataset
from gevgp.simstudy.metropolis import MAX_DIM, metropolis_reference
from gevgp.simstudy.surfaces import make_lattice, simulate_dataset


class TestArguments:
    """Argument validation of metropolis_reference."""

    def test_dimension_limit(self, rng):
        data = SiteDataset.from_raw(rng.uniform(0, 5, (9, 2)), rng.normal(size=(9, 2)))

        with pytest.raises(DomainError, match=str(MAX_DIM)):
            metropolis_reference(data, ModelSpec.named("M2"), n_steps=100_000)

    def test_needs_two_chains(self, small_dataset):
        with pytest.raises(DomainError, match="chains"):
            metropolis_reference(small_dataset, ModelSpec.named("M4"), n_steps=10_000, n_chains=1)

    def test_needs_enough_sweeps(self, small_dataset):
        with pytest.raises(DomainError, match="sweeps"):
            metropolis_reference(small_dataset, ModelSpec.named("M4"), n_steps=1000, n_chains=50)

    def test_step_scale_length(self, small_dataset):
        with pytest.raises(DomainError, match="step_scales"):
            metropolis_reference(small_dataset, ModelSpec.named("M4"), n_steps=10_000, n_chains=10,
                                 step_scales=[0.1, 0.1])


@pytest.mark.slow
class TestReferencePosterior:
    """Sampler output against known posteriors."""

    def test_conjugate_gaussian(self):
        """Test a Gaussian data layer with hyperparameters pinned by a tight prior."""
        data = SiteDataset.from_raw([[0.0, 0.0], [1.0, 0.0], [0.0, 2.0]],
                                    [[0.4, 1.1], [-0.2, 0.3], [2.0, 1.6]])
        spec = ModelSpec.named("M4")
        theta0 = spec.initial_hypers(data)
        likelihood = GaussianLikelihood()
        prior = NormalPrior(list(theta0.to_vector()), [0.01] * 3)

        inner = inner_optimize(theta0, data, config=FitConfig(likelihood=likelihood))
        exact_mean = inner.u_opt.a_vals
        exact_sd = np.sqrt(np.diag(inner.neg_hess_factor.precision))

        report = metropolis_reference(data, spec, n_steps=400_000, n_chains=50, seed=3, theta_init=theta0,
                                      prior=prior, likelihood=likelihood, check=False)

        assert report.names[:3] == ("a_0", "a_1", "a_2")
        assert np.all(report.rhat < 1.1)
        for i in range(3):
            mean, sd = report.summary(f"a_{i}")
            assert abs(mean - exact_mean[i]) < 0.1 * exact_sd[i]
            assert sd == pytest.approx(exact_sd[i], rel=0.1)

    def test_exchangeable_sites(self):
        """Test that two sites with identical data get the same marginal."""
        data = SiteDataset.from_raw([[0.0, 0.0], [1.0, 0.0]], [[0.5, 1.5, 1.0], [0.5, 1.5, 1.0]])
        prior = NormalPrior([0.0] * 4, [1.0] * 4)

        report = metropolis_reference(data, ModelSpec.named("M2"), n_steps=200_000, n_chains=20, seed=1,
                                      prior=prior, check=False)

        mean0, sd0 = report.summary("a_0")
        mean1, sd1 = report.summary("a_1")
        assert abs(mean0 - mean1) < 0.15 * sd0
        assert sd1 == pytest.approx(sd0, rel=0.1)

    def test_laplace_matches_reference(self):
        """Test the Laplace marginals against a long reference run on 4 sites.

        Both targets share an informative theta prior; with four sites a
        unit-variance prior leaves theta so diffuse that the latent
        marginals are visibly non-Gaussian.
        """
        data = simulate_dataset(make_lattice(2, 0.0, 2.0), shape=GUMBEL, n_per_site=5, seed=8)
        spec = ModelSpec.named("M2")
        prior = NormalPrior([3.0, 2.3, -3.5, 2.3], [0.25] * 4)

        fit = outer_optimize(data, spec, config=FitConfig(prior=prior))
        report = metropolis_reference(data, spec, n_steps=1_000_000, n_chains=50, seed=2, prior=prior)

        a_mean, a_sd, b_mean, b_sd = fit.latent_summary()
        for i in range(data.n_sites):
            for name, mean, sd in ((f"a_{i}", a_mean[i], a_sd[i]), (f"b_{i}", b_mean[i], b_sd[i])):
                ref_mean, ref_sd = report.summary(name)
                assert abs(mean - ref_mean) <= 0.5 * ref_sd, name
                assert abs(sd - ref_sd) <= 0.25 * ref_sd, name
