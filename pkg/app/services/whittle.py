"""
Periodogram and local Whittle estimation of (H, G) from pseudo-residuals.

The objective is R(psi) = log Q(psi) - (2 psi - 1) mean(log lambda_j) with
Q(psi) = mean(lambda_j^{2 psi - 1} I(lambda_j)) over the first m Fourier
frequencies, minimized over the bracket [a1, a2].
"""

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np
from scipy import optimize

from app.config import settings
from app.models.data_models import ConditionCheck, Periodogram, WhittleResult
from app.services.exceptions import DegenerateError, DomainError
from app.services.lm_simulation import d_const

logger = logging.getLogger(__name__)

WHITTLE_TOLERANCE = 1e-8
MULTISTART_POINTS = 5


@dataclass
class SearchResult:
    argmin: float
    minimum: float
    evaluations: int
    clamped: bool


def minimize_bracketed(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    tol: float = WHITTLE_TOLERANCE,
    starts: int = MULTISTART_POINTS,
) -> SearchResult:
    """
    Minimize f over [lo, hi] without assuming convexity.

    The best of `starts` equispaced points picks the sub-bracket between its
    neighbours, where bounded Brent search (golden section with parabolic
    steps) refines it. The scan points stay candidates, so a monotone objective
    returns the bracket end exactly.

    Returns:
        SearchResult with the minimizer, the objective value, the number of
        objective evaluations and whether the minimizer sits on a bracket end
    """
    grid = np.linspace(lo, hi, starts)
    values = np.array([f(x) for x in grid])
    best = int(np.argmin(values))
    left = float(grid[max(best - 1, 0)])
    right = float(grid[min(best + 1, starts - 1)])

    search = optimize.minimize_scalar(f, bounds=(left, right), method="bounded", options={"xatol": tol})
    x_best, f_best = float(search.x), float(search.fun)
    if values[best] <= f_best:
        x_best, f_best = float(grid[best]), float(values[best])

    clamped = bool(abs(x_best - lo) <= tol or abs(x_best - hi) <= tol)
    if clamped:
        logger.debug(f"Minimizer clamped at bracket end {x_best}")
    return SearchResult(argmin=x_best, minimum=f_best, evaluations=starts + int(search.nfev), clamped=clamped)


def _as_series(series) -> np.ndarray:
    values = getattr(series, "values", series)
    return np.asarray(values, dtype=float).ravel()


def periodogram_full(series) -> np.ndarray:
    """I(lambda_j) for j = 0..n-1."""
    xi = _as_series(series)
    return np.abs(np.fft.fft(xi)) ** 2 / (2.0 * np.pi * xi.size)


def periodogram(series) -> Periodogram:
    """
    Periodogram ordinates at the Fourier frequencies lambda_j = 2 pi j / n, j = 1..floor(n/2).

    I(lambda) = |sum_t xi_t exp(i t lambda)|^2 / (2 pi n), computed by FFT.
    """
    xi = _as_series(series)
    n = xi.size
    if n < 4:
        raise DomainError(f"periodogram needs n >= 4, got {n}")
    full = periodogram_full(xi)
    j = np.arange(1, n // 2 + 1)
    return Periodogram(ordinates=full[j], freqs=2.0 * np.pi * j / n, n=n)


def default_m(n: int) -> int:
    """m = floor(n * whittle_m_fraction), floor(n / 8) by default."""
    return max(1, int(np.floor(n * settings.whittle_m_fraction)))


def psi1_hat(G_hat: float, H_hat: float) -> float:
    """psi1 = sqrt(G D(H)); G = 0 gives 0."""
    if G_hat < 0:
        raise DomainError(f"G_hat={G_hat} must be nonnegative")
    return float(np.sqrt(G_hat * d_const(H_hat)))


def local_whittle(series, m: Optional[int] = None, bracket: Optional[Tuple[float, float]] = None) -> WhittleResult:
    """
    Local Whittle estimates of the memory parameter and the spectral constant.

    Args:
        series: Pseudo-residual series (array or LMSeries); the mean is removed first
        m: Number of Fourier frequencies, floor(n/8) by default
        bracket: Search interval (a1, a2), the configured default when omitted

    Returns:
        WhittleResult with H_hat, G_hat = Q(H_hat) and psi1_hat

    Raises:
        DegenerateError: If the first m ordinates are all zero
    """
    xi = _as_series(series)
    n = xi.size
    a1, a2 = bracket or (settings.whittle_a1, settings.whittle_a2)
    if not (0.5 < a1 < a2 < 1.0):
        raise DomainError(f"bracket ({a1}, {a2}) must satisfy 1/2 < a1 < a2 < 1")
    m = default_m(n) if m is None else int(m)
    if not (1 <= m < n / 2):
        raise DomainError(f"m={m} must satisfy 1 <= m < n/2 with n={n}")

    pgram = periodogram(xi - np.mean(xi))
    ordinates = pgram.ordinates[:m]
    freqs = pgram.freqs[:m]
    if not np.any(ordinates > 0):
        raise DegenerateError("the first m periodogram ordinates are all zero")
    log_freqs = np.log(freqs)
    mean_log_freq = float(np.mean(log_freqs))

    def q_value(psi: float) -> float:
        return float(np.mean(np.exp((2.0 * psi - 1.0) * log_freqs) * ordinates))

    def objective(psi: float) -> float:
        return np.log(q_value(psi)) - (2.0 * psi - 1.0) * mean_log_freq

    search = minimize_bracketed(objective, a1, a2)
    H_hat = search.argmin
    G_hat = q_value(H_hat)
    if search.clamped:
        logger.warning(f"Local Whittle estimate clamped at {H_hat:.6f} (bracket {a1}, {a2})")

    return WhittleResult(
        H_hat=H_hat,
        G_hat=G_hat,
        psi1_hat=psi1_hat(G_hat, H_hat),
        m=m,
        bracket=(a1, a2),
        minimizer_iterations=search.evaluations,
        clamped=search.clamped,
    )


def _condition_power_part(n: float, m: float, H: float, h: float) -> float:
    return (m / n) ** (2.0 * H - 1.0) + m ** (2.0 * (H - h)) / n ** (1.0 + H - 2.0 * h)


def check_condition_41(n: int, m: int, H: float, h: float, m_exponent: Optional[float] = None) -> ConditionCheck:
    """
    Evaluate the bandwidth growth condition (ln n)^4 ((m/n)^{2H-1} + m^{2(H-h)} / n^{1+H-2h}).

    The trend compares the power-law part at n and 2n under the rule m = n^a, with a
    given by m_exponent or inferred from (n, m). The (ln n)^4 factor grows at every
    practical n, so it is left out of the comparison. rate_exponent is the exponent
    of n governing the power-law part; negative means the condition holds.
    """
    if n < 2 or m < 1:
        raise DomainError(f"need n >= 2 and m >= 1, got n={n}, m={m}")
    value = np.log(n) ** 4 * _condition_power_part(n, m, H, h)
    a = m_exponent if m_exponent is not None else np.log(m) / np.log(n)
    at_n = _condition_power_part(float(n), float(n) ** a, H, h)
    at_2n = _condition_power_part(2.0 * n, (2.0 * n) ** a, H, h)
    rate_exponent = max((a - 1.0) * (2.0 * H - 1.0), 2.0 * a * (H - h) - (1.0 + H - 2.0 * h))
    return ConditionCheck(value=float(value), satisfied_trend=bool(at_2n < at_n), rate_exponent=float(rate_exponent))
