"""
Marked empirical process, leave-one-out variance estimates and the lack-of-fit test.

V_n(x) = sum_t e_t I(X_t <= x) is compared with n^H psi1 sup|J_n| where
J_n(x) = n^{-1} sum_t V_t I(X_t <= x) - mu_rsigma' A_n^{-1} alpha_n(x).
Under the null D_n = sup|V_n| / (n^H psi1 sup|J_n|) is asymptotically |N(0, 1)|.
"""

import logging
from typing import Callable, Optional, Tuple

import numpy as np
import pandas as pd
from scipy import integrate, stats

from app.config import settings
from app.models.data_models import Basis, FitResult, GofResult, Kernel, LooVariance, StepFunction, WhittleResult
from app.services.exceptions import DegenerateError, DegenerateTestError, DomainError, SingularDesignError
from app.services.kernel_variance import BandwidthLike, bandwidth_value, get_kernel
from app.services.regression import MAX_CONDITION, as_paired_arrays

logger = logging.getLogger(__name__)

LOO_CHUNK = 512
RESIDUAL_DEGENERACY = 1e-10


def _step_from_marks(x: np.ndarray, marks: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Knots (distinct sorted x) and cumulative sums of marks at the end of each tie group."""
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    cumulative = np.cumsum(marks[order], axis=0)
    last_of_group = np.append(xs[1:] != xs[:-1], True)
    return xs[last_of_group], cumulative[last_of_group]


def vtilde(X, Y, fit: FitResult) -> StepFunction:
    """Marked empirical process V_n(x) = sum_t e_t I(X_t <= x)."""
    x, y = as_paired_arrays(X, Y)
    residuals = np.asarray(fit.residuals, dtype=float)
    if residuals.size != x.size:
        raise DomainError(f"fit has {residuals.size} residuals for {x.size} observations")
    knots, values = _step_from_marks(x, residuals)
    return StepFunction(knots=knots, values=values)


def loo_variance(
    X,
    residuals,
    b: BandwidthLike,
    kernel: Optional[Kernel] = None,
    standardize: bool = True,
) -> LooVariance:
    """
    Leave-one-out estimates V_i(X_i) = Lambda_{-i}(X_i) phi(X_i)^{-1/2}.

    Lambda_{-i}(x)^2 = sum_{t != i} K_b(x - X_t) e_t^2 / (n - 1). With standardize the
    design is studentized by (X_bar, s) first, so b is in units of s and phi is the
    standard normal density.

    Raises:
        DegenerateError: If standardize is set and the design has zero spread
    """
    x, e = as_paired_arrays(X, residuals)
    n = x.size
    if n < 2:
        raise DomainError("leave-one-out estimates need n >= 2")
    kernel = kernel or get_kernel()
    bw = bandwidth_value(b)
    if standardize:
        s = float(np.sqrt(np.mean((x - x.mean()) ** 2)))
        if s == 0:
            raise DegenerateError("design has zero sample standard deviation")
        z = (x - x.mean()) / s
    else:
        z = x

    squared = e * e
    lam2 = np.empty(n)
    for start in range(0, n, LOO_CHUNK):
        rows = np.arange(start, min(start + LOO_CHUNK, n))
        weights = kernel((z[rows, None] - z[None, :]) / bw) / bw
        weights[np.arange(rows.size), rows] = 0.0
        lam2[rows] = weights @ squared / (n - 1)
    lam = np.sqrt(np.clip(lam2, 0.0, None))
    # phi(z)^{-1/2} written out to avoid underflow of phi in the tails
    inv_sqrt_phi = (2.0 * np.pi) ** 0.25 * np.exp(z * z / 4.0)
    return LooVariance(V=lam * inv_sqrt_phi, lam=lam, b=bw, kernel_kind=kernel.kind, standardized=standardize)


def _inverse_moment_matrix(design: np.ndarray) -> np.ndarray:
    An = design.T @ design / design.shape[0]
    condition = np.linalg.cond(An)
    if not np.isfinite(condition) or condition > MAX_CONDITION:
        raise SingularDesignError(f"A_n is not invertible (condition number {condition:.3e})")
    return np.linalg.inv(An)


def r_sigma_mean(X, V, basis: Optional[Basis] = None) -> np.ndarray:
    """mu_rsigma = n^{-1} sum_t r(X_t) V_t(X_t)."""
    basis = basis or Basis()
    x, v = as_paired_arrays(X, getattr(V, "V", V))
    return basis.evaluate(x).T @ v / x.size


def jhat(X, loo: LooVariance, basis: Optional[Basis] = None) -> StepFunction:
    """
    J_n(x) = n^{-1} sum_t V_t I(X_t <= x) - mu_rsigma' A_n^{-1} alpha_n(x),
    alpha_n(x) = n^{-1} sum_t r(X_t) I(X_t <= x), evaluated at the knots.
    """
    basis = basis or Basis()
    x, v = as_paired_arrays(X, loo.V)
    n = x.size
    design = basis.evaluate(x)
    projection = _inverse_moment_matrix(design) @ (design.T @ v / n)
    knots, cumulative_v = _step_from_marks(x, v / n)
    _, alpha = _step_from_marks(x, design / n)
    return StepFunction(knots=knots, values=cumulative_v - alpha @ projection)


def _decide(D_n: float, alpha: float) -> Tuple[float, float, bool]:
    p_value = float(min(1.0, 2.0 * stats.norm.sf(D_n)))
    critical = float(stats.norm.isf(alpha / 2.0))
    return p_value, critical, bool(D_n >= critical)


def dn_test(
    X,
    Y,
    fit: FitResult,
    whittle: WhittleResult,
    loo: LooVariance,
    basis: Optional[Basis] = None,
    alpha: Optional[float] = None,
) -> GofResult:
    """
    Lack-of-fit statistic D_n = sup|V_n| / (n^H psi1 sup|J_n|) with two-sided normal p-value.

    Raises:
        DegenerateTestError: If sup|J_n| or psi1 is zero
    """
    alpha = settings.significance_level if alpha is None else alpha
    v_process = vtilde(X, Y, fit)
    j_process = jhat(X, loo, basis)
    sup_V = v_process.sup_abs
    sup_J = j_process.sup_abs
    if sup_J == 0:
        raise DegenerateTestError("sup|J_n| is zero; the variance function carries no signal for the test")
    if whittle.psi1_hat == 0:
        raise DegenerateTestError("psi1_hat is zero")

    n = np.asarray(X).size
    D_n = float(sup_V / (n ** whittle.H_hat * whittle.psi1_hat * sup_J))
    p_value, critical, reject = _decide(D_n, alpha)
    logger.info(f"D_n={D_n:.6f}, p={p_value:.4f}, reject={reject}")
    return GofResult(
        D_n=D_n,
        p_value=p_value,
        sup_V=sup_V,
        sup_J=sup_J,
        H_hat=whittle.H_hat,
        psi1_hat=whittle.psi1_hat,
        n=n,
        alpha=alpha,
        critical_value=critical,
        reject=reject,
    )


def j_sigma(
    points,
    sigma: Callable[[np.ndarray], np.ndarray],
    basis: Optional[Basis] = None,
    mu: float = 0.0,
    gamma: float = 1.0,
    resolution: int = 20001,
) -> np.ndarray:
    """
    Population J_sigma(x) = E sigma(X) I(X <= x) - mu_rsigma' A^{-1} E r(X) I(X <= x) for X ~ N(mu, gamma^2).

    Computed by cumulative trapezoidal quadrature on [mu - 10 gamma, mu + 10 gamma].
    """
    basis = basis or Basis()
    grid = np.linspace(mu - 10.0 * gamma, mu + 10.0 * gamma, resolution)
    density = stats.norm.pdf(grid, loc=mu, scale=gamma)
    r = basis.evaluate(grid)
    f_sigma = integrate.cumulative_trapezoid(sigma(grid) * density, grid, initial=0.0)
    alpha = integrate.cumulative_trapezoid(r * density[:, None], grid, axis=0, initial=0.0)
    A = integrate.trapezoid(r[:, :, None] * r[:, None, :] * density[:, None, None], grid, axis=0)
    mu_rsigma = integrate.trapezoid(r * (sigma(grid) * density)[:, None], grid, axis=0)
    values = f_sigma - alpha @ np.linalg.solve(A, mu_rsigma)
    return np.interp(np.asarray(points, dtype=float), grid, values)


def dn_test_known(X, Y, fit: FitResult, H: float, psi1: float, sup_J_sigma: float, alpha: Optional[float] = None) -> GofResult:
    """
    Oracle version of the test with the true H, psi1 and sup|J_sigma| plugged in.
    """
    if sup_J_sigma <= 0 or psi1 <= 0:
        raise DegenerateTestError("oracle test needs positive psi1 and sup|J_sigma|")
    alpha = settings.significance_level if alpha is None else alpha
    sup_V = vtilde(X, Y, fit).sup_abs
    n = np.asarray(X).size
    D_n = float(sup_V / (n ** H * psi1 * sup_J_sigma))
    p_value, critical, reject = _decide(D_n, alpha)
    return GofResult(
        D_n=D_n,
        p_value=p_value,
        sup_V=sup_V,
        sup_J=sup_J_sigma,
        H_hat=H,
        psi1_hat=psi1,
        n=n,
        alpha=alpha,
        critical_value=critical,
        reject=reject,
    )


def check_nondegenerate_residuals(Y, fit: FitResult) -> None:
    """
    Reject fits whose residuals vanish relative to the response scale.

    Raises:
        DegenerateTestError: If residual_se <= 1e-10 * sd(Y)
    """
    scale = float(np.std(np.asarray(Y, dtype=float)))
    if fit.residual_se <= RESIDUAL_DEGENERACY * max(scale, np.finfo(float).tiny):
        raise DegenerateTestError("residuals vanish; the response is an exact function of the basis")


def knot_frame(X, Y, fit: FitResult, loo: LooVariance, basis: Optional[Basis] = None) -> pd.DataFrame:
    """Table of (knot, vtilde, jhat) for plotting the two step functions."""
    v_process = vtilde(X, Y, fit)
    j_process = jhat(X, loo, basis)
    return pd.DataFrame({"knot": v_process.knots, "vtilde": v_process.values, "jhat": j_process.values})
