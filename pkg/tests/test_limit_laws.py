"""
Tests for limit constants, the Z2 samplers and the kappa_2 estimators.
"""

import numpy as np
import pytest

from app.services.exceptions import DomainError
from app.services.lm_simulation import d_const, g_constants
from app.services.limit_laws import (
    a_beta,
    correl_lemma22,
    correl_thm31b,
    discretized_variance,
    hermite_coefficients,
    kappa2_block_bootstrap,
    kappa2_series,
    kappa2_summands,
    sample_z2,
    thm31a_scale,
    truncation_point,
    z2_reference_variance,
)


class TestConstants:

    def test_a_beta(self):
        assert a_beta(0.75) == pytest.approx(5.2441, abs=1e-4)

    def test_a_beta_domain(self):
        with pytest.raises(DomainError):
            a_beta(1.0)

    @pytest.mark.parametrize("H,h,expected", [(0.9, 0.9, 0.59956), (0.8, 0.8, 0.41989)])
    def test_correl_lemma22(self, H, h, expected):
        assert correl_lemma22(H, h) == pytest.approx(expected, abs=1e-5)

    def test_correl_lemma22_symmetric(self):
        assert correl_lemma22(0.9, 0.7) == pytest.approx(correl_lemma22(0.7, 0.9), rel=1e-12)

    def test_correl_lemma22_domain(self):
        with pytest.raises(DomainError):
            correl_lemma22(0.7, 0.7)
        with pytest.raises(DomainError):
            correl_lemma22(1.0, 0.9)

    def test_correl_thm31b(self):
        assert correl_thm31b(0.9) == pytest.approx(0.59956, abs=1e-5)
        assert correl_thm31b(0.75) == 0.0
        assert correl_thm31b(0.999999) == pytest.approx(2.0 / 3.0, abs=1e-4)

    def test_correl_thm31b_domain(self):
        with pytest.raises(DomainError):
            correl_thm31b(0.7)

    def test_correlations_are_correlations(self):
        for H in np.linspace(0.76, 0.99, 10):
            assert 0 < correl_thm31b(H) < 1
            assert 0 < correl_lemma22(H, H) < 1

    def test_truncation_point(self):
        assert truncation_point(0.8, 0.6, 1e-3) == pytest.approx(1e-3 ** (1.0 / -0.4))
        assert truncation_point(0.8, 0.6, 1e-3) == truncation_point(0.6, 0.8, 1e-3)

    def test_reference_variance_positive(self):
        assert z2_reference_variance(0.9, 0.8) > 0


class TestSampleZ2:

    def test_deterministic(self):
        first = sample_z2(0.9, 0.8, n_draws=300, seed=5)
        second = sample_z2(0.9, 0.8, n_draws=300, seed=5)
        assert np.array_equal(first.draws, second.draws)
        assert first.draws.size == 300
        assert first.z1.size == first.z2.size == 300
        assert first.grid_size == 64

    def test_independent_version_centred(self):
        sample = sample_z2(0.9, 0.8, n_draws=2000, seed=11)
        assert abs(sample.draws.mean()) < 4.0 * sample.draws.std() / np.sqrt(2000)

    def test_star_version_centred(self):
        sample = sample_z2(0.85, 0.85, kind="Z2_star", n_draws=2000, seed=12)
        assert sample.kind == "Z2_star"
        assert abs(sample.draws.mean()) < 4.0 * sample.draws.std() / np.sqrt(2000)

    def test_composite_reduces_to_independent_draws(self):
        base = sample_z2(0.9, 0.9, n_draws=200, seed=3)
        composite = sample_z2(0.9, 0.9, kind="composite_thm21", n_draws=200, seed=3, constants=(1.0, 0.0, 1.0))
        assert composite.draws == pytest.approx(base.draws, rel=1e-12)

    def test_composite_requires_constants(self):
        with pytest.raises(DomainError):
            sample_z2(0.9, 0.9, kind="composite_thm21", n_draws=10, seed=1)

    def test_composite_requires_strong_memory(self):
        with pytest.raises(DomainError):
            sample_z2(0.9, 0.7, kind="composite_thm21", n_draws=10, seed=1, constants=(1.0, 1.0, 1.0))

    def test_grid_size_floor(self):
        with pytest.raises(DomainError):
            sample_z2(0.9, 0.8, grid_size=32, n_draws=10, seed=1)

    def test_needs_strong_joint_memory(self):
        with pytest.raises(DomainError):
            sample_z2(0.7, 0.7, n_draws=10, seed=1)

    def test_unknown_kind(self):
        with pytest.raises(DomainError):
            sample_z2(0.9, 0.8, kind="Z3", n_draws=10, seed=1)

    @pytest.mark.parametrize("H,h", [(0.9, 0.9), (0.85, 0.8)])
    def test_grid_refinement_is_stable(self, H, h):
        coarse = discretized_variance(H, h, 64)
        fine = discretized_variance(H, h, 128)
        assert fine == pytest.approx(coarse, rel=0.05)


class TestKappa2:

    def test_summands(self):
        assert kappa2_summands([1.0, 2.0], [3.0, 4.0]) == pytest.approx([3.0, 8.0])
        assert kappa2_summands([1.0, 2.0], [3.0, 4.0], V=[2.0, 0.5]) == pytest.approx([6.0, 4.0])

    def test_summands_length(self):
        with pytest.raises(DomainError):
            kappa2_summands([1.0, 2.0], [1.0])

    def test_bootstrap_white_noise(self, rng):
        z = rng.standard_normal(2000)
        assert kappa2_block_bootstrap(z, B=500, seed=4) == pytest.approx(1.0, abs=0.25)

    def test_bootstrap_full_block_has_no_spread(self, rng):
        z = rng.standard_normal(100)
        assert kappa2_block_bootstrap(z, block_len=100, B=20, seed=4) == pytest.approx(0.0, abs=1e-20)

    def test_bootstrap_deterministic(self, rng):
        z = rng.standard_normal(300)
        assert kappa2_block_bootstrap(z, seed=9) == kappa2_block_bootstrap(z, seed=9)

    def test_bootstrap_domain(self, rng):
        z = rng.standard_normal(50)
        with pytest.raises(DomainError):
            kappa2_block_bootstrap(z, block_len=0)
        with pytest.raises(DomainError):
            kappa2_block_bootstrap(z, B=1)

    def test_hermite_coefficients(self):
        linear = hermite_coefficients(lambda v: v, terms=4)
        assert linear == pytest.approx([0.0, 1.0, 0.0, 0.0], abs=1e-10)
        square = hermite_coefficients(lambda v: v * v, terms=4)
        assert square == pytest.approx([1.0, 0.0, 2.0, 0.0], abs=1e-10)

    def test_series_with_independent_design(self):
        assert kappa2_series(0.7, 0.5, lambda v: np.ones_like(v), K=50) == pytest.approx(1.0, abs=1e-8)

    def test_series_positive_under_long_memory(self):
        assert kappa2_series(0.6, 0.6, lambda v: np.sqrt(1.0 + v * v), K=200) > 0


class TestNormalLimitScale:

    def test_vanishes_at_design_mean(self):
        assert thm31a_scale(0.0, lambda v: 1.0 + v * v, 0.7, 0.7) == 0.0

    def test_value(self):
        G_u, G_X = g_constants(0.7, 0.8)
        psi = np.sqrt(G_u * d_const(0.7) + G_X * d_const(0.8))
        scale = thm31a_scale([1.0, -2.0], lambda v: 1.0 + v * v, 0.7, 0.8)
        assert scale == pytest.approx([2.0 * psi, 10.0 * psi])
