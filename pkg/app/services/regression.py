"""
Least-squares fitting of Y_t = beta' r(X_t) + sigma(X_t) u_t and the plug-in
moment estimators built on its residuals.
"""

import logging
from typing import Callable, Optional, Tuple

import numpy as np

from app.models.data_models import Basis, FitResult
from app.services.exceptions import DomainError, LengthMismatchError, SingularDesignError

logger = logging.getLogger(__name__)

MAX_CONDITION = 1e12
HERMITE_ORDER = 96


def as_paired_arrays(X, Y) -> Tuple[np.ndarray, np.ndarray]:
    """Return X and Y as float arrays, checking that their lengths agree."""
    x = np.asarray(X, dtype=float).ravel()
    y = np.asarray(Y, dtype=float).ravel()
    if x.size != y.size:
        raise LengthMismatchError(f"series lengths differ: {x.size} != {y.size}")
    return x, y


def fit_lse(X, Y, basis: Optional[Basis] = None) -> FitResult:
    """
    Least-squares estimate of beta for the regression of Y on r(X).

    The solve goes through an orthogonal decomposition of the design matrix
    (numpy lstsq) instead of inverting A_n.

    Args:
        X: Design series
        Y: Response series
        basis: Regression basis, simple_linear by default

    Returns:
        FitResult with coefficients, residuals and sample moments

    Raises:
        LengthMismatchError: If X and Y differ in length
        SingularDesignError: If A_n has condition number above 1e12
    """
    basis = basis or Basis()
    x, y = as_paired_arrays(X, Y)
    n = x.size
    if n <= basis.q:
        raise DomainError(f"need n > q, got n={n}, q={basis.q}")

    design = basis.evaluate(x)
    An = design.T @ design / n
    condition = np.linalg.cond(An)
    if not np.isfinite(condition) or condition > MAX_CONDITION:
        raise SingularDesignError(f"A_n is not invertible (condition number {condition:.3e})")

    beta_hat, *_ = np.linalg.lstsq(design, y, rcond=None)
    residuals = y - design @ beta_hat
    xbar = float(np.mean(x))
    s2 = float(np.mean((x - xbar) ** 2))
    residual_se = float(np.sqrt(np.sum(residuals ** 2) / (n - basis.q)))

    logger.debug(f"LSE fit n={n}, basis={basis.kind}, beta_hat={beta_hat}")
    return FitResult(
        beta_hat=beta_hat,
        residuals=residuals,
        xbar=xbar,
        s2=s2,
        An=An,
        residual_se=residual_se,
        n=n,
        basis_kind=basis.kind,
    )


def slope_only_residuals(X, Y, fit: FitResult) -> np.ndarray:
    """Residuals Y_t - beta1_hat X_t that drop the intercept, as used for Whittle in simulations."""
    x, y = as_paired_arrays(X, Y)
    if fit.basis_kind not in ("simple_linear", "through_origin"):
        raise DomainError(f"slope-only residuals need a linear basis, got {fit.basis_kind}")
    slope = fit.beta_hat[1] if fit.basis_kind == "simple_linear" else fit.beta_hat[0]
    return y - slope * x


def plugin_constants(X, V, s: float) -> Tuple[float, float, float]:
    """
    Consistent estimates of (c_1, sigma_0, gamma).

    Returns:
        (sum X_i^2 V_i / n, sum V_i / n, s)
    """
    x, v = as_paired_arrays(X, V)
    if np.any(v < 0):
        raise DomainError("variance estimates V must be nonnegative")
    return float(np.mean(x * x * v)), float(np.mean(v)), float(s)


def gaussian_expectation(func: Callable[[np.ndarray], np.ndarray], mu: float = 0.0, gamma: float = 1.0, order: int = HERMITE_ORDER) -> float:
    """E func(X) for X ~ N(mu, gamma^2) by probabilists' Gauss-Hermite quadrature."""
    nodes, weights = np.polynomial.hermite_e.hermegauss(order)
    values = np.asarray(func(mu + gamma * nodes), dtype=float)
    return float(weights @ values / np.sqrt(2.0 * np.pi))


def first_order_coefficients(mu: float, gamma: float, sigma: Callable[[np.ndarray], np.ndarray]) -> Tuple[float, float]:
    """
    Coefficients (Gamma_0, Gamma_1) of the first-order limit of n^{1-H}(beta_hat - beta).

    Gamma_1 = Cov(X, sigma(X)) / gamma^2 and Gamma_0 = sigma_0 - mu Gamma_1. Gamma_1 vanishes
    when sigma is constant, or when mu = 0 and sigma is even; the slope limit is then degenerate.
    """
    if gamma <= 0:
        raise DomainError(f"gamma={gamma} must be positive")
    sigma_0 = gaussian_expectation(sigma, mu, gamma)
    cross = gaussian_expectation(lambda x: x * sigma(x), mu, gamma)
    covariance = cross - mu * sigma_0
    gamma_1 = covariance / gamma ** 2
    gamma_0 = sigma_0 - covariance * mu / gamma ** 2
    # Quadrature noise on an exactly cancelling covariance
    if abs(gamma_1) < 1e-12:
        gamma_1 = 0.0
    return gamma_0, gamma_1
