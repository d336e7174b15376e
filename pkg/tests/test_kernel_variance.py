"""
Tests for the kernel variance estimator, bandwidth rules and ASE.
"""

import numpy as np
import pytest
from scipy import integrate

from app.models.data_models import Bandwidth, Kernel
from app.services.exceptions import (
    BoundaryError,
    DegenerateError,
    DomainError,
    LengthMismatchError,
    OutOfSupportError,
)
from app.services.kernel_variance import (
    ase,
    bandwidth_range,
    bandwidth_table,
    default_bandwidth,
    evaluation_grid,
    sigma2_grid,
    sigma2_hat,
)


class TestKernel:

    @pytest.mark.parametrize("kind", ["cosine", "uniform", "gaussian"])
    def test_integrates_to_one(self, kind):
        kernel = Kernel(kind=kind)
        radius = kernel.radius
        total, _ = integrate.quad(lambda v: float(kernel(v)), -radius, radius, points=[0.0])
        assert total == pytest.approx(1.0, abs=1e-6)

    @pytest.mark.parametrize("kind", ["cosine", "uniform", "gaussian"])
    def test_symmetric(self, kind):
        kernel = Kernel(kind=kind)
        v = np.linspace(0.0, 2.0, 41)
        assert np.array_equal(kernel(v), kernel(-v))

    def test_compact_support(self):
        assert Kernel(kind="cosine")(np.array([1.01, -3.0])) == pytest.approx([0.0, 0.0])
        assert Kernel(kind="gaussian", truncation=2.0)(3.0) == 0.0


class TestSigma2Hat:

    def test_zero_residuals(self, rng):
        x = rng.standard_normal(200)
        assert np.all(sigma2_grid([-1.0, 0.0, 1.0], x, np.zeros(200), 0.5) == 0.0)

    def test_scale_law(self, heteroscedastic_sample):
        x, y = heteroscedastic_sample
        e = y - 2.0 * x
        grid = evaluation_grid()
        base = sigma2_grid(grid, x, e, 0.6)
        scaled = sigma2_grid(grid, x, 3.0 * e, 0.6)
        assert scaled == pytest.approx(9.0 * base, rel=1e-12)

    def test_locality_of_compact_kernel(self, rng):
        x = rng.standard_normal(300)
        e = rng.standard_normal(300)
        changed = e.copy()
        changed[np.abs(x) > 0.5] *= 10.0
        b = 0.4
        assert sigma2_hat(0.0, x, e, b).value == pytest.approx(sigma2_hat(0.0, x, changed, b).value, rel=1e-12)

    def test_recovers_variance_function(self, rng):
        n = 2000
        x = rng.standard_normal(n)
        e = np.sqrt(1.0 + x * x) * rng.standard_normal(n)
        bandwidth = Bandwidth(C=3.0, delta=0.2, n=n)
        estimates = sigma2_grid([-0.5, 0.0, 0.5], x, e, bandwidth)
        assert estimates == pytest.approx([1.25, 1.0, 1.25], abs=0.3)

    def test_point_estimate_matches_grid(self, heteroscedastic_sample):
        x, y = heteroscedastic_sample
        e = y - 2.0 * x
        estimate = sigma2_hat(0.3, x, e, 0.5)
        assert estimate.value == pytest.approx(sigma2_grid([0.3], x, e, 0.5)[0], rel=1e-12)
        assert estimate.b == 0.5
        assert estimate.phi_n_x > 0

    def test_nadaraya_watson_constant_residuals(self, rng):
        x = rng.standard_normal(500)
        estimates = sigma2_grid(evaluation_grid(), x, np.full(500, 2.0), 0.5, estimator="nadaraya_watson")
        assert estimates == pytest.approx(np.full(301, 4.0), rel=1e-12)

    def test_out_of_support(self, rng):
        x = rng.standard_normal(100)
        s = np.sqrt(np.mean((x - x.mean()) ** 2))
        with pytest.raises(OutOfSupportError):
            sigma2_hat(x.mean() + 6.5 * s, x, np.ones(100), 0.5)

    def test_constant_design(self):
        with pytest.raises(DegenerateError):
            sigma2_hat(0.0, np.zeros(10), np.ones(10), 0.5)

    def test_bad_bandwidth(self, rng):
        with pytest.raises(DomainError):
            sigma2_hat(0.0, rng.standard_normal(10), np.ones(10), 0.0)

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatchError):
            sigma2_grid([0.0], [0.0, 1.0, 2.0], [1.0, 1.0], 0.5)


class TestBandwidth:

    def test_evaluation_grid(self):
        grid = evaluation_grid()
        assert grid.size == 301
        assert grid[0] == -1.5
        assert grid[-1] == 1.5
        assert grid[150] == 0.0

    def test_case_a_long_memory_design(self):
        case, lo, hi = bandwidth_range(0.65, 0.85)
        assert case == "a"
        assert (lo, hi) == pytest.approx((0.075, 0.3))

    def test_case_a_moderate_design(self):
        case, lo, hi = bandwidth_range(0.6, 0.7)
        assert case == "a"
        assert (lo, hi) == pytest.approx((0.15, 0.4))

    def test_case_b(self):
        assert bandwidth_range(0.95, 0.65)[0] == "b"
        assert bandwidth_range(0.95, 0.65)[1:] == pytest.approx((0.05, 0.3))
        assert bandwidth_range(0.85, 0.65)[1:] == pytest.approx((0.15, 0.3))

    def test_boundary(self):
        with pytest.raises(BoundaryError):
            bandwidth_range(0.8, 0.6)

    def test_domain(self):
        with pytest.raises(DomainError):
            bandwidth_range(0.5, 0.7)

    def test_table_marks_boundary_cells(self):
        table = bandwidth_table([0.65, 0.8], [0.6, 0.85])
        assert table[(0.8, 0.6)] is None
        assert table[(0.65, 0.85)]["case"] == "a"
        assert len(table) == 4

    def test_default_bandwidth(self):
        bandwidth = default_bandwidth(0.65, 0.65, 1000)
        assert bandwidth.C == 3.0
        assert bandwidth.delta == 0.2
        assert bandwidth.b == pytest.approx(3.0 * 1000 ** -0.2)

    def test_default_bandwidth_long_memory_design(self):
        bandwidth = default_bandwidth(0.75, 0.95, 1000)
        assert bandwidth.C == 2.0
        assert bandwidth.delta == 0.099

    def test_default_bandwidth_nearest_cell(self):
        assert default_bandwidth(0.66, 0.64, 500).C == 3.0


class TestAse:

    def test_hand_example(self):
        assert ase([1.0, 1.0, 4.0], [1.0, 2.0, 4.0]) == pytest.approx(1.0 / 12.0)

    def test_doubling(self):
        truth = np.array([1.0, 2.0, 5.0])
        assert ase(2.0 * truth, truth) == pytest.approx(1.0)

    def test_exact(self):
        assert ase([3.0, 4.0], [3.0, 4.0]) == 0.0

    def test_zero_truth(self):
        with pytest.raises(ZeroDivisionError):
            ase([1.0], [0.0])

    def test_shape_mismatch(self):
        with pytest.raises(LengthMismatchError):
            ase([1.0, 2.0], [1.0])
