"""Test suite for core.optim module."""

import math

import numpy as np
import pytest

from gevgp.core.optim import bfgs_maximize, central_gradient


def concave_quadratic(x):
    center = np.array([1.0, -2.0, 0.5])
    scales = np.array([1.0, 4.0, 0.25])
    return -float(np.sum(scales * (x - center) ** 2))


class TestCentralGradient:
    """Test cases for central_gradient."""

    def test_quadratic(self):
        x = np.array([0.3, 0.1, -0.4])

        grad = central_gradient(concave_quadratic, x)

        expected = -2 * np.array([1.0, 4.0, 0.25]) * (x - np.array([1.0, -2.0, 0.5]))
        np.testing.assert_allclose(grad, expected, rtol=1e-7)

    def test_one_sided_fallback(self):
        """Test that an infeasible side falls back to the one-sided difference."""
        def barrier(x):
            return math.log(x[0]) if x[0] >= 1.0 else -math.inf

        grad = central_gradient(barrier, np.array([1.0]), rel_step=1e-6)

        assert grad[0] == pytest.approx(1.0, rel=1e-5)

    def test_parallel_matches_serial(self):
        x = np.array([0.5, 0.5, 0.5])

        np.testing.assert_array_equal(
            central_gradient(concave_quadratic, x, workers=3),
            central_gradient(concave_quadratic, x, workers=1),
        )


class TestBfgsMaximize:
    """Test cases for bfgs_maximize."""

    def test_quadratic_maximum(self):
        result = bfgs_maximize(concave_quadratic, np.zeros(3), lambda x: central_gradient(concave_quadratic, x),
                               tol=1e-9)

        assert result.converged
        np.testing.assert_allclose(result.x, [1.0, -2.0, 0.5], atol=1e-6)

    def test_rosenbrock(self):
        """Test a curved valley (negated Rosenbrock)."""
        def fun(x):
            return -float((1 - x[0]) ** 2 + 100 * (x[1] - x[0] ** 2) ** 2)

        def grad(x):
            return np.array([
                2 * (1 - x[0]) + 400 * x[0] * (x[1] - x[0] ** 2),
                -200 * (x[1] - x[0] ** 2),
            ])

        result = bfgs_maximize(fun, np.array([-1.2, 1.0]), grad, tol=1e-8, max_iter=1000)

        assert result.converged
        np.testing.assert_allclose(result.x, [1.0, 1.0], atol=1e-4)

    def test_infeasible_start(self):
        result = bfgs_maximize(lambda x: -math.inf, np.zeros(2), lambda x: np.zeros(2))

        assert not result.converged
        assert "starting point" in result.message

    def test_iteration_cap(self):
        result = bfgs_maximize(concave_quadratic, np.full(3, 50.0),
                               lambda x: central_gradient(concave_quadratic, x), max_iter=1)

        assert not result.converged
        assert result.iterations == 1
        assert result.message == "iteration cap reached"

    def test_callback_sees_every_step(self):
        steps = []

        result = bfgs_maximize(concave_quadratic, np.zeros(3), lambda x: central_gradient(concave_quadratic, x),
                               callback=lambda k, x, f, g: steps.append(k))

        assert steps == list(range(1, result.iterations + 1))

    def test_steps_are_bounded(self):
        """Test that no coordinate moves more than two units in one step."""
        positions = [np.full(3, 100.0)]

        bfgs_maximize(concave_quadratic, positions[0], lambda x: central_gradient(concave_quadratic, x),
                      max_iter=5, callback=lambda k, x, f, g: positions.append(x.copy()))

        for before, after in zip(positions, positions[1:]):
            assert np.max(np.abs(after - before)) <= 2.0 + 1e-12
