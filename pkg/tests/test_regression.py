"""
Tests for least-squares fitting and plug-in constants.
"""

import numpy as np
import pytest

from app.models.data_models import Basis
from app.services.exceptions import DomainError, LengthMismatchError, SingularDesignError
from app.services.regression import (
    first_order_coefficients,
    fit_lse,
    gaussian_expectation,
    plugin_constants,
    slope_only_residuals,
)


class TestFitLse:

    def test_exact_fit(self):
        fit = fit_lse([0.0, 1.0, 2.0], [0.0, 1.0, 2.0])
        assert fit.beta_hat == pytest.approx([0.0, 1.0], abs=1e-12)
        assert np.all(np.abs(fit.residuals) < 1e-12)
        assert fit.residual_se == pytest.approx(0.0, abs=1e-12)

    def test_three_point_hand_computation(self):
        fit = fit_lse([0.0, 1.0, 2.0], [1.0, 0.0, 2.0])
        assert fit.xbar == pytest.approx(1.0)
        assert fit.s2 == pytest.approx(2.0 / 3.0)
        assert fit.beta_hat == pytest.approx([0.5, 0.5])
        assert fit.An == pytest.approx(np.array([[1.0, 1.0], [1.0, 5.0 / 3.0]]))

    def test_normal_equations(self, heteroscedastic_sample):
        x, y = heteroscedastic_sample
        for basis in (Basis(), Basis(kind="polynomial", degree=3), Basis(kind="through_origin")):
            fit = fit_lse(x, y, basis)
            design = basis.evaluate(x)
            bound = 1e-9 * np.sum(np.abs(y)) * np.max(np.abs(design), axis=0)
            assert np.all(np.abs(design.T @ fit.residuals) <= bound)

    def test_affine_equivariance(self, heteroscedastic_sample):
        x, y = heteroscedastic_sample
        base = fit_lse(x, y)
        moved = fit_lse(x, 3.0 * y + 5.0)
        assert moved.beta_hat == pytest.approx([3.0 * base.beta_hat[0] + 5.0, 3.0 * base.beta_hat[1]], rel=1e-10)

    def test_noise_free_recovery(self, rng):
        x = rng.standard_normal(100)
        fit = fit_lse(x, -1.5 + 0.25 * x)
        assert fit.beta_hat == pytest.approx([-1.5, 0.25], abs=1e-12)

    def test_custom_basis(self, rng):
        x = rng.uniform(0.5, 2.0, 50)
        basis = Basis(kind="custom", functions=[np.ones_like, np.log])
        fit = fit_lse(x, 1.0 + 2.0 * np.log(x), basis)
        assert fit.beta_hat == pytest.approx([1.0, 2.0], abs=1e-10)
        assert fit.basis_kind == "custom"

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatchError):
            fit_lse([0.0, 1.0, 2.0], [0.0, 1.0])

    def test_singular_design(self):
        with pytest.raises(SingularDesignError):
            fit_lse([1.0, 1.0, 1.0, 1.0], [0.0, 1.0, 2.0, 3.0])

    def test_needs_more_points_than_coefficients(self):
        with pytest.raises(DomainError):
            fit_lse([0.0, 1.0], [0.0, 1.0])

    def test_summary_is_json_ready(self):
        summary = fit_lse([0.0, 1.0, 2.0], [1.0, 0.0, 2.0]).summary()
        assert summary["beta_hat"] == pytest.approx([0.5, 0.5])
        assert summary["basis_kind"] == "simple_linear"
        assert summary["n"] == 3


class TestSlopeOnlyResiduals:

    def test_drops_intercept(self):
        x = np.array([0.0, 1.0, 2.0, 3.0])
        y = 4.0 + 2.0 * x
        fit = fit_lse(x, y)
        assert slope_only_residuals(x, y, fit) == pytest.approx(np.full(4, 4.0))

    def test_rejects_polynomial_basis(self):
        x = np.linspace(-1.0, 1.0, 10)
        fit = fit_lse(x, x ** 2, Basis(kind="polynomial", degree=2))
        with pytest.raises(DomainError):
            slope_only_residuals(x, x ** 2, fit)


class TestPluginConstants:

    def test_unit_v(self, rng):
        x = rng.standard_normal(20_000)
        c1, sigma0, gamma = plugin_constants(x, np.ones_like(x), 1.0)
        assert c1 == pytest.approx(1.0, abs=0.05)
        assert sigma0 == 1.0
        assert gamma == 1.0

    def test_zero_v(self, rng):
        x = rng.standard_normal(10)
        assert plugin_constants(x, np.zeros(10), 0.7) == (0.0, 0.0, 0.7)

    def test_heteroscedastic_sigma0(self, rng):
        x = rng.standard_normal(5000)
        sigma = np.sqrt(1.0 + x * x)
        _, sigma0, _ = plugin_constants(x, sigma, 1.0)
        truth = gaussian_expectation(lambda v: np.sqrt(1.0 + v * v))
        assert sigma0 == pytest.approx(truth, abs=0.03)

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatchError):
            plugin_constants([0.0, 1.0], [1.0], 1.0)

    def test_negative_v(self):
        with pytest.raises(DomainError):
            plugin_constants([0.0, 1.0], [1.0, -1.0], 1.0)


class TestFirstOrderCoefficients:

    def test_gaussian_expectation_moments(self):
        assert gaussian_expectation(lambda v: v * v) == pytest.approx(1.0, rel=1e-12)
        assert gaussian_expectation(lambda v: v, mu=2.0, gamma=3.0) == pytest.approx(2.0, rel=1e-12)

    def test_even_sigma_degenerates(self):
        gamma_0, gamma_1 = first_order_coefficients(0.0, 1.0, lambda v: np.sqrt(1.0 + v * v))
        assert gamma_1 == 0.0
        assert gamma_0 > 1.0

    def test_linear_sigma(self):
        gamma_0, gamma_1 = first_order_coefficients(5.0, 1.0, lambda v: v)
        assert gamma_1 == pytest.approx(1.0, rel=1e-10)
        assert gamma_0 == pytest.approx(0.0, abs=1e-10)

    def test_constant_sigma(self):
        gamma_0, gamma_1 = first_order_coefficients(1.0, 2.0, lambda v: np.full_like(v, 3.0))
        assert gamma_1 == 0.0
        assert gamma_0 == pytest.approx(3.0)
