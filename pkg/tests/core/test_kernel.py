"""Test suite for core.kernel module."""

import math

import numpy as np
import pytest

from gevgp.core.errors import DomainError, SingularCovarianceError
from gevgp.core.kernel import (
    KernelConfig,
    build_cov,
    gp_condition,
    kernel_eval,
    kernel_matrix,
    median_distance,
    mvn_logpdf,
    mvn_sample,
)


class TestKernelEval:
    """Test cases for kernel_eval."""

    def test_known_value(self):
        """Test sigma2 = 2, lambda = 0.5 at distance 5."""
        cfg = KernelConfig(log_sigma2=math.log(2.0), log_lambda=math.log(0.5))

        assert kernel_eval((0.0, 0.0), (3.0, 4.0), cfg) == pytest.approx(9.0799859e-5, rel=1e-7)

    def test_zero_distance_is_amplitude(self):
        cfg = KernelConfig(log_sigma2=math.log(3.0), log_lambda=0.0)

        assert kernel_eval((1.0, 2.0), (1.0, 2.0), cfg) == pytest.approx(3.0)

    def test_squared_exponential_form(self):
        cfg = KernelConfig(log_sigma2=0.0, log_lambda=0.0, form="squared_exponential")

        assert kernel_eval((0.0, 0.0), (1.0, 0.0), cfg) == pytest.approx(math.exp(-0.5))

    def test_non_finite_coordinates(self):
        with pytest.raises(DomainError):
            kernel_eval((0.0, float("nan")), (0.0, 0.0), KernelConfig())

    def test_unknown_form(self):
        with pytest.raises(DomainError):
            KernelConfig(form="matern")

    @pytest.mark.parametrize("kwargs", [{"log_sigma2": 800.0}, {"log_lambda": -800.0}, {"log_sigma2": math.nan}])
    def test_log_hyperparameters_bounded(self, kwargs):
        """Test that hyperparameters whose exponential overflows are rejected."""
        with pytest.raises(DomainError):
            KernelConfig(**kwargs)


class TestBuildCov:
    """Test cases for build_cov."""

    def test_single_site(self):
        """Test a single site: one-by-one covariance sigma2 + nugget."""
        cfg = KernelConfig(log_sigma2=math.log(2.0), log_lambda=0.0, jitter=0.5)
        cov = build_cov([[0.0, 0.0]], cfg)

        np.testing.assert_allclose(cov.matrix(), [[2.5]])
        assert cov.log_det == pytest.approx(math.log(2.5))

    def test_factor_reconstructs_matrix(self, rng):
        """Test that L L^T equals K + jitter I."""
        coords = rng.uniform(0.0, 5.0, size=(12, 2))
        cfg = KernelConfig(log_sigma2=0.3, log_lambda=0.2)
        expected = kernel_matrix(coords, coords, cfg) + cfg.nugget * np.eye(12)

        cov = build_cov(coords, cfg)

        np.testing.assert_allclose(cov.matrix(), expected, rtol=1e-12, atol=1e-12)
        assert cov.log_det == pytest.approx(np.linalg.slogdet(expected)[1], rel=1e-10)
        np.testing.assert_allclose(cov.precision, np.linalg.inv(expected), rtol=1e-7, atol=1e-9)

    def test_default_jitter_is_relative(self):
        cfg = KernelConfig(log_sigma2=math.log(4.0))

        assert cfg.nugget == pytest.approx(4e-6)

    def test_coincident_sites_without_jitter(self):
        """Test that duplicate sites without a nugget fail the factorization."""
        cfg = KernelConfig(jitter=0.0)

        with pytest.raises(SingularCovarianceError) as info:
            build_cov([[1.0, 1.0], [1.0, 1.0]], cfg)

        assert info.value.minor == 2

    def test_coincident_sites_with_jitter(self):
        cov = build_cov([[1.0, 1.0], [1.0, 1.0]], KernelConfig(jitter=1e-3))

        assert cov.dim == 2

    def test_empty_coordinates(self):
        with pytest.raises(DomainError):
            build_cov(np.zeros((0, 2)), KernelConfig())


class TestMvn:
    """Test cases for mvn_logpdf and mvn_sample."""

    def test_logpdf_standard_normal(self):
        cov = build_cov([[0.0, 0.0]], KernelConfig(log_sigma2=0.0, jitter=0.0))

        assert mvn_logpdf(np.zeros(1), cov) == pytest.approx(-0.5 * math.log(2 * math.pi))

    def test_logpdf_matches_dense(self, rng):
        coords = rng.uniform(0.0, 3.0, size=(6, 2))
        cfg = KernelConfig(log_sigma2=-0.2, log_lambda=0.4)
        cov = build_cov(coords, cfg)
        dense = cov.matrix()
        z = rng.standard_normal(6)

        expected = (
            -0.5 * 6 * math.log(2 * math.pi)
            - 0.5 * np.linalg.slogdet(dense)[1]
            - 0.5 * z @ np.linalg.solve(dense, z)
        )

        assert mvn_logpdf(z, cov) == pytest.approx(expected, rel=1e-10)

    def test_logpdf_length_mismatch(self):
        cov = build_cov([[0.0, 0.0], [1.0, 0.0]], KernelConfig())

        with pytest.raises(DomainError):
            mvn_logpdf(np.zeros(3), cov)

    def test_logpdf_invariant_to_reordering(self, rng):
        coords = rng.uniform(0.0, 5.0, size=(7, 2))
        z = rng.standard_normal(7)
        order = rng.permutation(7)
        cfg = KernelConfig(log_sigma2=0.3, log_lambda=0.2)

        value = mvn_logpdf(z[order], build_cov(coords[order], cfg))

        assert value == pytest.approx(mvn_logpdf(z, build_cov(coords, cfg)), rel=1e-10)

    def test_sample_covariance(self):
        """Test that 10^5 draws reproduce the covariance."""
        coords = np.array([[0.0, 0.0], [0.5, 0.0], [2.0, 1.0]])
        cov = build_cov(coords, KernelConfig(log_sigma2=0.0, log_lambda=0.0))

        draws = mvn_sample(np.zeros(3), cov, 100_000, 3)

        assert draws.shape == (100_000, 3)
        np.testing.assert_allclose(np.cov(draws, rowvar=False), cov.matrix(), atol=0.02)

    def test_zero_draws(self):
        cov = build_cov([[0.0, 0.0], [1.0, 0.0]], KernelConfig())

        assert mvn_sample(np.zeros(2), cov, 0, 1).shape == (0, 2)

    def test_sample_is_seeded(self):
        cov = build_cov([[0.0, 0.0], [1.0, 0.0]], KernelConfig())

        np.testing.assert_array_equal(mvn_sample(np.ones(2), cov, 5, 11), mvn_sample(np.ones(2), cov, 5, 11))


class TestGpCondition:
    """Test cases for gp_condition."""

    def test_interpolates_observed_site(self):
        """Test that conditioning at an observed site without nugget is exact."""
        coords = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 2.0]])
        values = np.array([0.3, -1.2, 2.0])
        cfg = KernelConfig(log_sigma2=0.5, log_lambda=0.0, jitter=0.0)

        mean, var = gp_condition(coords, values, coords[[1]], cfg)

        assert mean[0] == pytest.approx(-1.2, abs=1e-10)
        assert var[0] == pytest.approx(0.0, abs=1e-10)

    def test_far_site_reverts_to_prior(self):
        coords = np.array([[0.0, 0.0], [1.0, 0.0]])
        cfg = KernelConfig(log_sigma2=math.log(2.0), log_lambda=0.0, jitter=0.0)

        mean, var = gp_condition(coords, [1.0, 2.0], [[500.0, 500.0]], cfg)

        assert mean[0] == pytest.approx(0.0, abs=1e-12)
        assert var[0] == pytest.approx(2.0)

    def test_matches_dense_formula(self, rng):
        coords = rng.uniform(0.0, 4.0, size=(8, 2))
        new = rng.uniform(0.0, 4.0, size=(3, 2))
        values = rng.standard_normal(8)
        cfg = KernelConfig(log_sigma2=0.1, log_lambda=0.3, jitter=1e-4)
        k_oo = kernel_matrix(coords, coords, cfg) + cfg.nugget * np.eye(8)
        k_no = kernel_matrix(new, coords, cfg)

        mean, var = gp_condition(coords, values, new, cfg)

        np.testing.assert_allclose(mean, k_no @ np.linalg.solve(k_oo, values), rtol=1e-8, atol=1e-10)
        expected_var = cfg.sigma2 + cfg.nugget - np.einsum("ij,ji->i", k_no, np.linalg.solve(k_oo, k_no.T))
        np.testing.assert_allclose(var, expected_var, rtol=1e-8, atol=1e-10)
        assert np.all(var >= 0)

    def test_value_count_mismatch(self):
        with pytest.raises(DomainError):
            gp_condition([[0.0, 0.0]], [1.0, 2.0], [[1.0, 1.0]], KernelConfig())

    @pytest.mark.parametrize("form", ["exponential", "squared_exponential"])
    def test_variance_within_prior_bounds(self, rng, form):
        """Test 0 <= kriging variance <= sigma2 + nugget over random configurations."""
        jitters = [0.0, 1e-8, 1e-3] if form == "exponential" else [1e-6, 1e-3]
        for _ in range(30):
            coords = rng.uniform(0.0, 4.0, size=(rng.integers(1, 12), 2))
            new = np.vstack([rng.uniform(-2.0, 6.0, size=(5, 2)), coords[:2]])
            jitter = float(rng.choice(jitters))
            cfg = KernelConfig(log_sigma2=rng.uniform(-2.0, 2.0), log_lambda=rng.uniform(-1.5, 1.0),
                               jitter=jitter, form=form)

            _, var = gp_condition(coords, rng.standard_normal(len(coords)), new, cfg)

            assert np.all(var >= 0.0)
            assert np.all(var <= cfg.sigma2 + cfg.nugget)


class TestMedianDistance:
    def test_single_site_defaults_to_one(self):
        assert median_distance([[2.0, 3.0]]) == 1.0

    def test_square(self):
        coords = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]

        assert median_distance(coords) == pytest.approx(1.0)
