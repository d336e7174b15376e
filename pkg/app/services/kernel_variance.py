"""
Kernel-type estimation of the conditional variance function sigma^2(x).

sigma2_hat(x) = sum_t K_b(x - X_t) e_t^2 / (n phi_n(x)) with the normal density
factor phi_n(x) = phi((x - X_bar) / s) / s. A Nadaraya-Watson ratio smoother
is offered as the alternative used in simulation studies.
"""

import logging
from typing import Dict, Literal, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import stats

from app.config import settings
from app.models.data_models import Bandwidth, Kernel, VarianceEstimate
from app.services.exceptions import (
    BoundaryError,
    DegenerateError,
    DomainError,
    LengthMismatchError,
    OutOfSupportError,
)
from app.services.regression import as_paired_arrays

logger = logging.getLogger(__name__)

Estimator = Literal["kernel", "nadaraya_watson"]
BandwidthLike = Union[Bandwidth, float]

DENSITY_FLOOR = 1e-300
GRID_CHUNK = 256

# Multipliers C of b = C n^{-delta} that minimized the average squared error
# for the 1 + x^2 variance function, keyed by (H, h).
BANDWIDTH_CONSTANTS: Dict[Tuple[float, float], float] = {
    (0.65, 0.65): 3.0, (0.65, 0.75): 3.5, (0.65, 0.85): 4.0, (0.65, 0.95): 1.5,
    (0.75, 0.65): 4.0, (0.75, 0.75): 4.0, (0.75, 0.85): 4.0, (0.75, 0.95): 2.0,
    (0.85, 0.65): 4.5, (0.85, 0.75): 6.0, (0.85, 0.85): 5.0, (0.85, 0.95): 2.5,
    (0.95, 0.65): 6.0, (0.95, 0.75): 7.0, (0.95, 0.85): 7.5, (0.95, 0.95): 4.5,
}
LONG_MEMORY_DESIGN_H = 0.95


def get_kernel(kind: Optional[str] = None) -> Kernel:
    """Kernel of the given kind, with the configured default and gaussian truncation."""
    return Kernel(kind=kind or settings.default_kernel, truncation=settings.gaussian_truncation)


def bandwidth_value(b: BandwidthLike) -> float:
    value = b.b if isinstance(b, Bandwidth) else float(b)
    if not value > 0:
        raise DomainError(f"bandwidth must be positive, got {value}")
    return value


def evaluation_grid(lo: float = -1.5, hi: float = 1.5, step: float = 0.01) -> np.ndarray:
    """Equispaced evaluation grid, -1.50, -1.49, ..., 1.50 by default (301 points)."""
    count = int(round((hi - lo) / step)) + 1
    return np.round(lo + step * np.arange(count), 10)


def _density_factor(points: np.ndarray, xbar: float, s: float) -> np.ndarray:
    if s <= 0:
        raise DegenerateError("design has zero sample standard deviation")
    distance = np.abs(points - xbar)
    if np.any(distance > settings.support_sd * s):
        worst = points[np.argmax(distance)]
        raise OutOfSupportError(
            f"x={worst} lies more than {settings.support_sd} standard deviations from the design mean"
        )
    phi_n = stats.norm.pdf((points - xbar) / s) / s
    if np.any(phi_n < DENSITY_FLOOR):
        raise OutOfSupportError("density factor underflows at the evaluation point")
    return phi_n


def _kernel_sums(points: np.ndarray, x: np.ndarray, weights: np.ndarray, b: float, kernel: Kernel) -> Tuple[np.ndarray, np.ndarray]:
    """Row sums of K_b(point - X_t) w_t and of K_b(point - X_t), chunked over points."""
    weighted = np.empty(points.size)
    plain = np.empty(points.size)
    for start in range(0, points.size, GRID_CHUNK):
        block = points[start:start + GRID_CHUNK]
        k = kernel((block[:, None] - x[None, :]) / b) / b
        weighted[start:start + GRID_CHUNK] = k @ weights
        plain[start:start + GRID_CHUNK] = k.sum(axis=1)
    return weighted, plain


def sigma2_grid(
    grid: Sequence[float],
    X,
    residuals,
    b: BandwidthLike,
    kernel: Optional[Kernel] = None,
    estimator: Estimator = "kernel",
) -> np.ndarray:
    """
    Vectorized variance estimates over a grid of evaluation points.

    Args:
        grid: Evaluation points
        X: Design series
        residuals: Regression residuals e_t
        b: Bandwidth (model or positive float)
        kernel: Kernel, the configured default when omitted
        estimator: "kernel" for the density-normalized estimator, "nadaraya_watson" for the ratio smoother

    Returns:
        Array of sigma^2 estimates, one per grid point
    """
    x, e = as_paired_arrays(X, residuals)
    if x.size < 2:
        raise DomainError("need at least 2 observations")
    kernel = kernel or get_kernel()
    bw = bandwidth_value(b)
    points = np.atleast_1d(np.asarray(grid, dtype=float))

    if estimator == "nadaraya_watson":
        weighted, plain = _kernel_sums(points, x, e * e, bw, kernel)
        if np.any(plain <= 0):
            raise OutOfSupportError("no design point within the kernel window of an evaluation point")
        return weighted / plain

    xbar = float(np.mean(x))
    s = float(np.sqrt(np.mean((x - xbar) ** 2)))
    phi_n = _density_factor(points, xbar, s)
    weighted, _ = _kernel_sums(points, x, e * e, bw, kernel)
    return weighted / (x.size * phi_n)


def sigma2_hat(
    x: float,
    X,
    residuals,
    b: BandwidthLike,
    kernel: Optional[Kernel] = None,
    estimator: Estimator = "kernel",
) -> VarianceEstimate:
    """
    Estimate sigma^2 at a single point.

    Raises:
        DegenerateError: If the design has zero spread
        OutOfSupportError: If x is too far from the design mean for phi_n
    """
    value = float(sigma2_grid([x], X, residuals, b, kernel, estimator)[0])
    design = np.asarray(X, dtype=float)
    xbar = float(np.mean(design))
    s = float(np.sqrt(np.mean((design - xbar) ** 2)))
    if estimator == "nadaraya_watson":
        kernel = kernel or get_kernel()
        bw = bandwidth_value(b)
        density = float(np.mean(kernel((x - design) / bw)) / bw)
    else:
        density = float(_density_factor(np.array([x]), xbar, s)[0])
    return VarianceEstimate(x=x, value=value, b=bandwidth_value(b), phi_n_x=density)


def bandwidth_range(H: float, h: float) -> Tuple[str, float, float]:
    """
    Feasible range of the bandwidth exponent delta in b = C n^{-delta}.

    Returns:
        (case, lo, hi) with case "a" when H < (1 + h) / 2 and "b" when H > (1 + h) / 2

    Raises:
        BoundaryError: If H = (1 + h) / 2
    """
    for name, value in (("H", H), ("h", h)):
        if not (0.5 < value < 1.0):
            raise DomainError(f"{name}={value} must lie in the open interval (1/2, 1)")
    boundary = (1.0 + h) / 2.0
    if abs(H - boundary) < 1e-12:
        raise BoundaryError(f"H={H} sits on the boundary (1 + h) / 2 = {boundary}")
    if H < boundary:
        upper = 2.0 * (1.0 - h) if h > 0.75 else 2.0 * h - 1.0
        return "a", (1.0 - h) / 2.0, upper
    upper = 2.0 * h - 1.0 if h < 0.75 else 2.0 - 2.0 * h
    return "b", 1.0 - H, upper


def _nearest_cell(H: float, h: float) -> Tuple[float, float]:
    return min(BANDWIDTH_CONSTANTS, key=lambda cell: (abs(cell[0] - H) + abs(cell[1] - h), cell))


def default_bandwidth(H: float, h: float, n: int) -> Bandwidth:
    """
    Table-calibrated bandwidth C n^{-delta}.

    delta is 0.2, or 0.099 when the design memory is 0.95. Untabulated (H, h)
    take the constant of the nearest tabulated cell.
    """
    cell = _nearest_cell(H, h)
    if cell != (H, h):
        logger.debug(f"No tabulated bandwidth for H={H}, h={h}; using cell {cell}")
    delta = settings.bandwidth_delta_long if cell[1] == LONG_MEMORY_DESIGN_H else settings.bandwidth_delta
    return Bandwidth(C=BANDWIDTH_CONSTANTS[cell], delta=delta, n=n)


def bandwidth_table(H_grid: Sequence[float], h_grid: Sequence[float]) -> Dict[Tuple[float, float], Optional[Dict[str, object]]]:
    """Lookup of the feasible delta range per (H, h); boundary cells map to None."""
    table: Dict[Tuple[float, float], Optional[Dict[str, object]]] = {}
    for H in H_grid:
        for h in h_grid:
            try:
                case, lo, hi = bandwidth_range(H, h)
                table[(H, h)] = {"case": case, "lo": lo, "hi": hi}
            except BoundaryError:
                table[(H, h)] = None
    return table


def ase(estimates, truth) -> float:
    """Average squared relative error mean((estimate / truth - 1)^2)."""
    est = np.asarray(estimates, dtype=float)
    tru = np.asarray(truth, dtype=float)
    if est.shape != tru.shape:
        raise LengthMismatchError(f"estimate and truth shapes differ: {est.shape} != {tru.shape}")
    if np.any(tru == 0):
        raise ZeroDivisionError("truth contains a zero value")
    return float(np.mean((est / tru - 1.0) ** 2))
