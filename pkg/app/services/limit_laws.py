"""
Closed-form limit constants, samplers for the nonstandard limit laws of the
least-squares slope, and the block-bootstrap estimator of kappa_2.

The double Wiener-Ito integral
    Z2 = C ∫∫ ∫_0^1 (s - x1)^{-(3-2H)/2} (s - x2)^{-(3-2h)/2} ds dB1(x1) dB2(x2)
is sampled by a Riemann-Ito discretization: Gaussian increments on cells of
(-T, 1], fine cells on [-1, 1] and geometrically growing cells further left,
cell-averaged kernels in closed form and a midpoint rule in s.
"""

import logging
from typing import Callable, Optional, Tuple

import numpy as np
from scipy import special

from app.config import settings
from app.models.data_models import LimitLawSample
from app.services.exceptions import DomainError
from app.services.lm_simulation import acvf_farima, acvf_fgn, d_const, g_constants, theta
from app.services.random_streams import BOOTSTRAP_STREAM, LIMIT_STREAM, derive_seed, stream_generator

logger = logging.getLogger(__name__)

GEOMETRIC_RATIO = 1.1
DRAW_BATCH = 256
HERMITE_TERMS = 30
HERMITE_NODES = 96


def a_beta(z: float) -> float:
    """a(z) = ∫_0^1 u^{z-3/2} (1-u)^{1-2z} du = B(z - 1/2, 2 - 2z)."""
    if not (0.5 < z < 1.0):
        raise DomainError(f"z={z} must lie in the open interval (1/2, 1)")
    return float(special.beta(z - 0.5, 2.0 - 2.0 * z))


def correl_lemma22(H: float, h: float) -> float:
    """Limit correlation of the two second-order terms of the slope estimate, for H + h > 3/2."""
    for name, value in (("H", H), ("h", h)):
        if not (0.5 < value < 1.0):
            raise DomainError(f"{name}={value} must lie in the open interval (1/2, 1)")
    if H + h <= 1.5:
        raise DomainError(f"H + h = {H + h} must exceed 3/2")
    s = 2.0 * H + 2.0 * h
    return float(np.sqrt(2.0 * (s - 3.0) * (s - 2.0)) / (s - 1.0) * np.sqrt(H * h / ((2.0 * H - 1.0) * (2.0 * h - 1.0))))


def correl_thm31b(H: float) -> float:
    """Limit correlation of n^{1-2H} sum(u_t^2 - 1) and (n^{-H} sum u_t)^2; 0 at H = 3/4."""
    if not (0.75 <= H < 1.0):
        raise DomainError(f"H={H} must lie in [3/4, 1)")
    return float(2.0 * H / (4.0 * H - 1.0) * np.sqrt((4.0 * H - 3.0) / (2.0 * H - 1.0)))


def truncation_point(H: float, h: float, tolerance: Optional[float] = None) -> float:
    """
    Left end T of the integration window.

    The variance lost left of -T decays like T^{2a - 2} for the heavier of the two
    memory parameters a, so T = tolerance^{1 / (2a - 2)}.
    """
    tolerance = settings.z2_tail_tolerance if tolerance is None else tolerance
    heavier = max(H, h)
    return float(max(1.0, tolerance ** (1.0 / (2.0 * heavier - 2.0))))


def _cells(grid_size: int, T: float) -> Tuple[np.ndarray, np.ndarray]:
    """Cell edges (left, right) covering [-T, 1]."""
    fine = np.linspace(-1.0, 1.0, 2 * grid_size + 1)
    width = 1.0 / grid_size
    coarse = [-1.0]
    while coarse[-1] > -T:
        width *= GEOMETRIC_RATIO
        coarse.append(max(coarse[-1] - width, -T))
    edges = np.concatenate([np.array(coarse[:0:-1]), fine])
    return edges[:-1], edges[1:]


def _cell_kernel(s: np.ndarray, left: np.ndarray, right: np.ndarray, alpha: float) -> np.ndarray:
    """
    Cell averages of (s - x)^{-alpha} I(x < s), shape (len(s), n_cells):
    [(s - x_l)^{1-alpha} - (s - min(x_r, s))^{1-alpha}] / ((1 - alpha) width) for s > x_l.
    """
    power = 1.0 - alpha
    upper = np.minimum(right[None, :], s[:, None])
    active = s[:, None] > left[None, :]
    near = np.where(active, s[:, None] - left[None, :], 0.0) ** power
    far = np.where(active, s[:, None] - upper, 0.0) ** power
    return np.where(active, (near - far) / (power * (right - left)[None, :]), 0.0)


class _Discretization:
    """Kernel matrices and constants for one (H, h, grid_size)."""

    def __init__(self, H: float, h: float, grid_size: int, match_covariance: bool, tolerance: Optional[float]):
        self.T = truncation_point(H, h, tolerance)
        self.left, self.right = _cells(grid_size, self.T)
        self.widths = self.right - self.left
        count = 2 * grid_size
        self.s = (np.arange(count) + 0.5) / count
        self.ds = 1.0 / count
        self.A1 = _cell_kernel(self.s, self.left, self.right, 1.5 - H)
        self.A2 = _cell_kernel(self.s, self.left, self.right, 1.5 - h)

        G_u, G_X = g_constants(H, h)
        self.scale_z1 = np.sqrt(G_u * theta(H) / a_beta(H))
        self.scale_z2 = np.sqrt(G_X * theta(h) / a_beta(h))
        c_squared = G_u * G_X / (a_beta(H) * a_beta(h))
        if match_covariance:
            c_squared *= theta(H) * theta(h)
        self.c_tilde = float(np.sqrt(c_squared))

        single_1 = self.A1.sum(axis=0) * self.ds
        single_2 = self.A2.sum(axis=0) * self.ds
        self.tail_fraction = max(self._tail_share(single_1, H), self._tail_share(single_2, h))

    def _tail_share(self, single: np.ndarray, memory: float) -> float:
        captured = float(np.sum(single * single * self.widths))
        omitted = self.T ** (2.0 * memory - 2.0) / (2.0 - 2.0 * memory)
        return omitted / (captured + omitted)

    def draw(self, rng: np.random.Generator, size: int, shared: bool):
        increments_1 = rng.standard_normal((size, self.widths.size)) * np.sqrt(self.widths)
        increments_2 = increments_1 if shared else rng.standard_normal((size, self.widths.size)) * np.sqrt(self.widths)
        W1 = increments_1 @ self.A1.T
        W2 = increments_2 @ self.A2.T
        double = np.sum(W1 * W2, axis=1) * self.ds
        if shared:
            diagonal = (increments_1 ** 2) @ np.sum(self.A1 * self.A2, axis=0)
            double = double - diagonal * self.ds
        z1 = self.scale_z1 * W1.sum(axis=1) * self.ds
        z2 = self.scale_z2 * W2.sum(axis=1) * self.ds
        return self.c_tilde * double, z1, z2


def sample_z2(
    H: float,
    h: float,
    kind: str = "Z2_independent",
    grid_size: Optional[int] = None,
    n_draws: int = 1000,
    seed: Optional[int] = None,
    constants: Optional[Tuple[float, float, float]] = None,
    match_covariance: bool = True,
    tail_tolerance: Optional[float] = None,
) -> LimitLawSample:
    """
    Monte Carlo draws of the nonstandard limit variables.

    Args:
        H, h: Memory parameters with H + h > 3/2
        kind: Z2_independent (B1 independent of B2), Z2_star (B1 = B2, diagonal removed)
              or composite_thm21, the slope limit (c1 Z2 - sigma0 Z1 Z2) / gamma
        grid_size: Cells per unit length on [-1, 1], at least 64
        n_draws: Number of draws
        seed: Seed; draws are generated in fixed-size batches with derived seeds
        constants: (c1, sigma0, gamma) for composite_thm21
        match_covariance: Scale C so that Z2 carries the covariance of the finite-n statistic
        tail_tolerance: Target for the variance share lost to truncation

    Returns:
        LimitLawSample with the draws and the jointly drawn (Z1, Z2)
    """
    grid_size = settings.z2_grid_size if grid_size is None else grid_size
    if grid_size < 64:
        raise DomainError(f"grid_size={grid_size} must be at least 64")
    correl_lemma22(H, h)
    if kind == "composite_thm21":
        if min(H, h) <= 0.75:
            raise DomainError("the composite slope limit needs H and h above 3/4")
        if constants is None:
            raise DomainError("composite_thm21 requires constants (c1, sigma0, gamma)")
    elif kind not in ("Z2_independent", "Z2_star"):
        raise DomainError(f"unknown limit kind {kind}")

    grid = _Discretization(H, h, grid_size, match_covariance, tail_tolerance)
    if grid.tail_fraction > (tail_tolerance or settings.z2_tail_tolerance) * 10:
        logger.warning(f"Truncated tail carries {grid.tail_fraction:.2e} of the variance")

    shared = kind == "Z2_star"
    draws, z1, z2 = [], [], []
    for batch, start in enumerate(range(0, n_draws, DRAW_BATCH)):
        size = min(DRAW_BATCH, n_draws - start)
        batch_seed = None if seed is None else derive_seed(seed, "z2", batch)
        d, a, b = grid.draw(stream_generator(batch_seed, LIMIT_STREAM), size, shared)
        draws.append(d)
        z1.append(a)
        z2.append(b)
    double, z1_all, z2_all = np.concatenate(draws), np.concatenate(z1), np.concatenate(z2)

    if kind == "composite_thm21":
        c1, sigma0, gamma = constants
        double = (c1 * double - sigma0 * z1_all * z2_all) / gamma

    logger.info(f"Sampled {n_draws} draws of {kind} at H={H}, h={h}, T={grid.T:.3e}")
    return LimitLawSample(
        draws=double,
        grid_size=grid_size,
        kind=kind,
        truncation=grid.T,
        tail_fraction=grid.tail_fraction,
        z1=z1_all,
        z2=z2_all,
        seed=seed,
    )


def discretized_variance(H: float, h: float, grid_size: int = 64, match_covariance: bool = True) -> float:
    """Exact variance of the discretized Z2 with independent measures."""
    grid = _Discretization(H, h, grid_size, match_covariance, None)
    cov_1 = (grid.A1 * grid.widths) @ grid.A1.T
    cov_2 = (grid.A2 * grid.widths) @ grid.A2.T
    return float(grid.c_tilde ** 2 * grid.ds ** 2 * np.sum(cov_1 * cov_2))


def z2_reference_variance(H: float, h: float) -> float:
    """Var Z2 = 2 G_u G_X theta(H) theta(h) / ((2H + 2h - 3)(2H + 2h - 2)) under matched covariance."""
    correl_lemma22(H, h)
    G_u, G_X = g_constants(H, h)
    s = 2.0 * H + 2.0 * h
    return float(2.0 * G_u * G_X * theta(H) * theta(h) / ((s - 3.0) * (s - 2.0)))


def kappa2_summands(X, residuals, V=None) -> np.ndarray:
    """Summands X_t e_t, or X_t V_t e_t when leave-one-out values V are supplied."""
    x = np.asarray(X, dtype=float)
    e = np.asarray(residuals, dtype=float)
    if x.shape != e.shape:
        raise DomainError("X and residuals must have the same length")
    if V is None:
        return x * e
    return x * np.asarray(getattr(V, "V", V), dtype=float) * e


def default_block_len(n: int) -> int:
    """ceil(n^{1/3})."""
    return int(np.ceil(n ** (1.0 / 3.0)))


def kappa2_block_bootstrap(summands, block_len: Optional[int] = None, B: int = 500, seed: Optional[int] = None) -> float:
    """
    Moving-block bootstrap estimate of the long-run variance n Var(mean of summands).

    Each resample concatenates ceil(n / l) blocks of length l with uniform start
    points and keeps the first n values.

    Args:
        summands: Weakly dependent series, e.g. X_t e_t
        block_len: Block length l, ceil(n^{1/3}) by default
        B: Number of resamples (>= 2)
        seed: Seed of the resampling stream

    Returns:
        n times the sample variance (ddof=1) of the B resampled means
    """
    z = np.asarray(summands, dtype=float)
    n = z.size
    block_len = default_block_len(n) if block_len is None else int(block_len)
    if not (1 <= block_len <= n):
        raise DomainError(f"block_len={block_len} must lie in [1, {n}]")
    if B < 2:
        raise DomainError("need at least 2 bootstrap resamples")
    rng = stream_generator(seed, BOOTSTRAP_STREAM)
    blocks = int(np.ceil(n / block_len))
    starts = rng.integers(0, n - block_len + 1, size=(B, blocks))
    indices = (starts[:, :, None] + np.arange(block_len)[None, None, :]).reshape(B, -1)[:, :n]
    means = z[indices].mean(axis=1)
    return float(n * np.var(means, ddof=1))


def hermite_coefficients(func: Callable[[np.ndarray], np.ndarray], terms: int = HERMITE_TERMS) -> np.ndarray:
    """c_j = E func(Z) He_j(Z) for Z ~ N(0, 1), j = 0..terms-1."""
    nodes, weights = np.polynomial.hermite_e.hermegauss(HERMITE_NODES)
    basis = np.polynomial.hermite_e.hermevander(nodes, terms - 1)
    return (weights * func(nodes)) @ basis / np.sqrt(2.0 * np.pi)


def kappa2_series(H: float, h: float, sigma: Callable[[np.ndarray], np.ndarray], K: int = 500) -> float:
    """
    Truncated long-run variance sum_{|k| <= K} E[nu(X_0) nu(X_k)] gamma_u(k) with nu(x) = x sigma(x).

    E[nu(X_0) nu(X_k)] = sum_j c_j^2 rho_k^j / j! by the Hermite expansion of nu, with
    rho_k the fGn autocorrelation and gamma_u the exact FARIMA autocovariance.
    """
    c = hermite_coefficients(lambda x: x * sigma(x))
    factorials = special.factorial(np.arange(c.size))
    lags = np.arange(K + 1)
    rho = np.asarray(acvf_fgn(lags, h), dtype=float)
    cross = (rho[:, None] ** np.arange(c.size)[None, :]) @ (c * c / factorials)
    gamma_u = np.asarray(acvf_farima(lags, H), dtype=float)
    terms = cross * gamma_u
    return float(terms[0] + 2.0 * np.sum(terms[1:]))


def thm31a_scale(x, sigma2: Callable[[np.ndarray], np.ndarray], H: float, h: float, mu: float = 0.0, gamma: float = 1.0) -> np.ndarray:
    """
    Standard deviation |(x - mu) / gamma| sigma^2(x) psi of the normal limit of
    n^{1-h}(sigma2_hat(x) - sigma^2(x)), psi^2 = G_u D(H) + G_X D(h).
    """
    G_u, G_X = g_constants(H, h)
    psi = np.sqrt(G_u * d_const(H) + G_X * d_const(h))
    points = np.asarray(x, dtype=float)
    return np.abs((points - mu) / gamma) * sigma2(points) * psi
