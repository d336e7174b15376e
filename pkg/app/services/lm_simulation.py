"""
Simulation of the long-memory design and error processes.

The design X_t is fractional Gaussian noise, generated exactly by circulant
embedding with a Durbin-Levinson fallback. The error u_t is a unit-variance
FARIMA(0, H - 1/2, 0) moving average with analytically normalized
coefficients. The spectral and covariance constants that the limit theory
needs (theta, D, G_u, G_X) live here as well.
"""

import logging
from typing import Callable, Optional, Tuple

import numpy as np
from scipy import signal, special

from app.config import settings
from app.models.data_models import LMSeries, MACoefficients, MemoryParams
from app.services.exceptions import DomainError, SimulationError
from app.services.random_streams import DESIGN_STREAM, ERROR_STREAM, stream_generator

logger = logging.getLogger(__name__)

# Eigenvalues of the circulant embedding in [-EIGEN_TOLERANCE, 0] are rounding noise.
EIGEN_TOLERANCE = 1e-10

InnovationSampler = Callable[[np.random.Generator, int], np.ndarray]


def _check_open_unit_half(value: float, name: str) -> None:
    if not (0.5 < value < 1.0):
        raise DomainError(f"{name}={value} must lie in the open interval (1/2, 1)")


def theta(a: float) -> float:
    """theta(a) = 2 Gamma(2 - 2a) cos(pi (1 - a)), positive on (1/2, 1)."""
    _check_open_unit_half(a, "a")
    return float(2.0 * special.gamma(2.0 - 2.0 * a) * np.cos(np.pi * (1.0 - a)))


def d_const(a: float) -> float:
    """D(a) = theta(a) / (a (2a - 1)); diverges as a approaches 1/2."""
    return theta(a) / (a * (2.0 * a - 1.0))


def acvf_fgn(k, h: float):
    """
    Autocovariance of unit-variance fractional Gaussian noise.

    gamma_X(k) = (|k+1|^{2h} - 2|k|^{2h} + |k-1|^{2h}) / 2. h = 1/2 gives white noise.

    Args:
        k: Lag or array of lags (k >= 0)
        h: Memory parameter in [1/2, 1)

    Returns:
        Scalar or array of autocovariances
    """
    if not (0.5 <= h < 1.0):
        raise DomainError(f"h={h} must lie in [1/2, 1)")
    lags = np.abs(np.asarray(k, dtype=float))
    two_h = 2.0 * h
    values = 0.5 * (np.abs(lags + 1.0) ** two_h - 2.0 * lags ** two_h + np.abs(lags - 1.0) ** two_h)
    return float(values) if values.ndim == 0 else values


def acvf_farima(k, H: float):
    """
    Autocovariance of the unit-variance FARIMA(0, d, 0) process with d = H - 1/2.

    gamma_u(k) = Gamma(1-d) Gamma(k+d) / (Gamma(d) Gamma(k+1-d)), evaluated in log space.
    """
    _check_open_unit_half(H, "H")
    d = H - 0.5
    lags = np.abs(np.asarray(k, dtype=float))
    log_values = special.gammaln(1.0 - d) + special.gammaln(lags + d) - special.gammaln(d) - special.gammaln(lags + 1.0 - d)
    values = np.exp(log_values)
    return float(values) if values.ndim == 0 else values


def g_constants(H: float, h: float) -> Tuple[float, float]:
    """
    Spectral constants induced by the unit-variance conventions.

    Returns:
        (G_u, G_X) with G_u = Gamma(1-d)^2 / (2 pi Gamma(1-2d)) for the FARIMA error
        and G_X = h (2h - 1) / theta(h) = 1 / D(h) for the fGn design
    """
    _check_open_unit_half(H, "H")
    d = H - 0.5
    G_u = float(np.exp(2.0 * special.gammaln(1.0 - d) - special.gammaln(1.0 - 2.0 * d)) / (2.0 * np.pi))
    G_X = 1.0 / d_const(h)
    return G_u, G_X


def _circulant_sample(acvf: np.ndarray, rng: np.random.Generator) -> Optional[np.ndarray]:
    """Davies-Harte draw; None when the embedding is not nonnegative definite."""
    n = acvf.size - 1
    row = np.concatenate([acvf, acvf[n - 1:0:-1]])
    size = row.size
    eigenvalues = np.fft.fft(row).real
    if np.any(eigenvalues < -EIGEN_TOLERANCE):
        logger.debug(f"Circulant embedding has eigenvalue {eigenvalues.min():.3e}")
        return None
    eigenvalues = np.clip(eigenvalues, 0.0, None)
    z = rng.standard_normal(size) + 1j * rng.standard_normal(size)
    transformed = np.fft.fft(np.sqrt(eigenvalues / size) * z)
    return transformed.real[:n]


def _durbin_levinson_sample(acvf: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Sequential exact sampling from the one-step predictors of a stationary series."""
    n = z.size
    x = np.empty(n)
    v = acvf[0]
    x[0] = np.sqrt(v) * z[0]
    phi = np.empty(0)
    for t in range(1, n):
        k = (acvf[t] - phi @ acvf[t - 1:0:-1]) / v
        phi = np.concatenate([phi - k * phi[::-1], [k]])
        v *= 1.0 - k * k
        if v <= 0:
            raise SimulationError(f"Durbin-Levinson innovation variance vanished at t={t}")
        x[t] = phi @ x[t - 1::-1] + np.sqrt(v) * z[t]
    return x


def gen_fgn(
    n: int,
    h: float,
    mu: float = 0.0,
    gamma: float = 1.0,
    seed: Optional[int] = None,
    stream: int = DESIGN_STREAM,
) -> LMSeries:
    """
    Generate fractional Gaussian noise with mean mu and standard deviation gamma.

    Args:
        n: Series length (n >= 2)
        h: Memory parameter in [1/2, 1)
        mu: Mean
        gamma: Standard deviation (> 0)
        seed: Seed of the draw; the same (seed, stream) gives the same series
        stream: Stream index within the seed

    Returns:
        LMSeries of kind fgn

    Raises:
        SimulationError: If both the embedding and the fallback fail
    """
    if n < 2:
        raise DomainError(f"n={n} must be at least 2")
    if gamma <= 0:
        raise DomainError(f"gamma={gamma} must be positive")
    acvf = np.asarray(acvf_fgn(np.arange(n + 1), h), dtype=float)
    rng = stream_generator(seed, stream)

    sample = _circulant_sample(acvf, rng)
    if sample is None:
        logger.warning(f"Circulant embedding failed for n={n}, h={h}; using Durbin-Levinson")
        try:
            sample = _durbin_levinson_sample(acvf[:n], rng.standard_normal(n))
        except SimulationError:
            logger.error(f"Exact fGn simulation failed for n={n}, h={h}")
            raise

    return LMSeries(
        values=mu + gamma * sample,
        kind="fgn",
        params=MemoryParams(h=h),
        seed=seed,
    )


def ma_coeffs(H: float, J: int) -> MACoefficients:
    """
    Normalized FARIMA(0, H - 1/2, 0) moving-average coefficients b_0..b_J.

    The raw coefficients follow b_j = b_{j-1} (j - 1 + d) / j. They are divided by
    the square root of the infinite sum Gamma(1-2d) / Gamma(1-d)^2, so the truncated
    sum of squares falls short of 1 by exactly the reported norm_error.
    """
    _check_open_unit_half(H, "H")
    if J < 1:
        raise DomainError(f"J={J} must be at least 1")
    d = H - 0.5
    j = np.arange(1, J + 1, dtype=float)
    raw = np.concatenate([[1.0], np.cumprod((j - 1.0 + d) / j)])
    log_total = special.gammaln(1.0 - 2.0 * d) - 2.0 * special.gammaln(1.0 - d)
    normalizer = float(np.exp(-0.5 * log_total))
    b = raw * normalizer
    norm_error = max(0.0, 1.0 - float(np.sum(b * b)))
    return MACoefficients(b=b, J=J, norm_error=norm_error, normalizer=normalizer, d=d)


def gen_farima_ma(
    n: int,
    H: float,
    seed: Optional[int] = None,
    burn_in: Optional[int] = None,
    stream: int = ERROR_STREAM,
    innovations: Optional[InnovationSampler] = None,
) -> LMSeries:
    """
    Generate u_t = sum_{j<=J} b_j eps_{t-j} with J = burn_in + n.

    Args:
        n: Series length (n >= 2)
        H: Memory parameter in (1/2, 1)
        seed: Seed of the draw
        burn_in: Truncation offset, at least n; defaults to max(n, ma_burn_in_min)
        stream: Stream index within the seed
        innovations: Optional sampler (rng, size) -> standardized innovations;
                     standard Gaussian when omitted

    Returns:
        LMSeries of kind farima_ma with unit variance up to the truncation deficit
    """
    if n < 2:
        raise DomainError(f"n={n} must be at least 2")
    if burn_in is None:
        burn_in = max(n, settings.ma_burn_in_min)
    if burn_in < n:
        raise DomainError(f"burn_in={burn_in} must be at least n={n}")

    coefficients = ma_coeffs(H, burn_in + n)
    rng = stream_generator(seed, stream)
    size = n + coefficients.J
    eps = innovations(rng, size) if innovations is not None else rng.standard_normal(size)
    values = signal.fftconvolve(eps, coefficients.b, mode="valid")
    logger.debug(f"FARIMA draw n={n}, H={H}, J={coefficients.J}, norm_error={coefficients.norm_error:.2e}")

    return LMSeries(
        values=values,
        kind="farima_ma",
        params=MemoryParams(H=H),
        seed=seed,
    )
