"""
Monte Carlo harness for the simulation tables and distributional checks.

Every replication is generated from a seed derived from
(master_seed, table_id, H, h, rep), so a cell can be re-run on its own and the
result does not depend on the number of worker processes. Replications run
serially for one worker and on a process pool otherwise; results come back in
task order and are reduced in that order.
"""

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from app.models.data_models import Bandwidth, Basis, ExperimentConfig, TableCell, TableResult
from app.services.exceptions import DegenerateTestError, DomainError, OutOfSupportError
from app.services.goodness_of_fit import dn_test, loo_variance
from app.services.kernel_variance import ase, default_bandwidth, evaluation_grid, get_kernel, sigma2_grid
from app.services.limit_laws import correl_lemma22, correl_thm31b, sample_z2
from app.services.lm_simulation import gen_farima_ma, gen_fgn
from app.services.random_streams import derive_seed
from app.services.regression import fit_lse, gaussian_expectation, plugin_constants, slope_only_residuals
from app.services.whittle import local_whittle

logger = logging.getLogger(__name__)

VARIANCE_FUNCTIONS: Dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "1+x2": lambda x: 1.0 + np.asarray(x, dtype=float) ** 2,
    "constant": lambda x: np.ones_like(np.asarray(x, dtype=float)),
}


def variance_function(kind: str) -> Callable[[np.ndarray], np.ndarray]:
    try:
        return VARIANCE_FUNCTIONS[kind]
    except KeyError:
        raise DomainError(f"unknown variance function {kind!r}; choose from {sorted(VARIANCE_FUNCTIONS)}")


def sigma_function(kind: str) -> Callable[[np.ndarray], np.ndarray]:
    sigma2 = variance_function(kind)
    return lambda x: np.sqrt(sigma2(x))


def rmse(estimates, truth: float) -> float:
    """Root mean squared error of estimates around a scalar truth."""
    values = np.asarray(estimates, dtype=float)
    if values.size == 0:
        raise DomainError("rmse of an empty sample")
    return float(np.sqrt(np.mean((values - truth) ** 2)))


def simulate_model(n: int, H: float, h: float, seed: int, beta: Tuple[float, float] = (0.0, 2.0), sigma_kind: str = "1+x2"):
    """
    One draw of Y_t = beta0 + beta1 X_t + sigma(X_t) u_t with fGn design and FARIMA errors.

    Design and error use independent streams of the same seed.

    Returns:
        (X, Y, u)
    """
    x = gen_fgn(n, h, seed=seed).values
    u = gen_farima_ma(n, H, seed=seed).values
    y = beta[0] + beta[1] * x + sigma_function(sigma_kind)(x) * u
    return x, y, u


def _execute(worker: Callable[[Any], Any], tasks: Sequence[Any], workers: int) -> List[Any]:
    """Run tasks in order, on a process pool when workers > 1."""
    if workers <= 1 or len(tasks) <= 1:
        return [worker(task) for task in tasks]
    chunksize = max(1, len(tasks) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(worker, tasks, chunksize=chunksize))


def _tasks(cfg: ExperimentConfig, table_id: str, cells: Sequence[Tuple[float, float]]) -> List[Tuple]:
    return [
        (cfg, H, h, derive_seed(cfg.master_seed, table_id, H, h, rep))
        for H, h in cells
        for rep in range(cfg.reps)
    ]


def _grid_cells(cfg: ExperimentConfig) -> List[Tuple[float, float]]:
    return [(H, h) for H in cfg.H_grid for h in cfg.h_grid]


def _slope_worker(task) -> float:
    cfg, H, h, seed = task
    x, y, _ = simulate_model(cfg.n, H, h, seed, cfg.beta, cfg.sigma_kind)
    return float(fit_lse(x, y).beta_hat[1])


def _whittle_worker(task) -> float:
    cfg, H, h, seed = task
    x, y, _ = simulate_model(cfg.n, H, h, seed, cfg.beta, cfg.sigma_kind)
    fit = fit_lse(x, y)
    residuals = slope_only_residuals(x, y, fit) if cfg.whittle_residuals == "slope_only" else fit.residuals
    m = int(np.floor(cfg.n ** cfg.m_exponent))
    return local_whittle(residuals, m=m).H_hat


def _cell_bandwidth(cfg: ExperimentConfig, H: float, h: float) -> Bandwidth:
    calibrated = default_bandwidth(H, h, cfg.n)
    return Bandwidth(
        C=cfg.bandwidth_c if cfg.bandwidth_c is not None else calibrated.C,
        delta=cfg.bandwidth_delta if cfg.bandwidth_delta is not None else calibrated.delta,
        n=cfg.n,
    )


def _ase_worker(task) -> float:
    cfg, H, h, seed = task
    x, y, _ = simulate_model(cfg.n, H, h, seed, cfg.beta, cfg.sigma_kind)
    fit = fit_lse(x, y)
    grid = evaluation_grid()
    try:
        estimates = sigma2_grid(grid, x, fit.residuals, _cell_bandwidth(cfg, H, h), get_kernel(cfg.kernel), cfg.estimator)
    except OutOfSupportError as e:
        logger.warning(f"ASE replication skipped at H={H}, h={h}: {e}")
        return float("nan")
    return ase(estimates, variance_function(cfg.sigma_kind)(grid))


def _group(cells: Sequence[Tuple[float, float]], reps: int, results: Sequence[float]) -> Dict[Tuple[float, float], np.ndarray]:
    values = np.asarray(results, dtype=float).reshape(len(cells), reps)
    return {cell: values[i] for i, cell in enumerate(cells)}


def _protocol(cfg: ExperimentConfig, **extra) -> Dict[str, Any]:
    protocol = cfg.model_dump()
    protocol.update(extra)
    return protocol


def run_table1(cfg: ExperimentConfig) -> TableResult:
    """RMSE of the least-squares slope per (H, h)."""
    started = time.perf_counter()
    cells = _grid_cells(cfg)
    logger.info(f"Table 1: {len(cells)} cells x {cfg.reps} reps, n={cfg.n}, workers={cfg.workers}")
    grouped = _group(cells, cfg.reps, _execute(_slope_worker, _tasks(cfg, "table1", cells), cfg.workers))
    result_cells = [
        TableCell(H=H, h=h, reps=cfg.reps, rmse=rmse(grouped[(H, h)], cfg.beta[1]))
        for H, h in cells
    ]
    return TableResult(
        table_id="table1",
        statistic="rmse",
        cells=result_cells,
        n=cfg.n,
        reps=cfg.reps,
        master_seed=cfg.master_seed,
        workers=cfg.workers,
        runtime_seconds=time.perf_counter() - started,
        protocol=_protocol(cfg, target="beta1_hat"),
    )


def run_table2(cfg: ExperimentConfig) -> TableResult:
    """RMSE of the local Whittle estimate of H from regression residuals, m = floor(n^m_exponent)."""
    started = time.perf_counter()
    cells = _grid_cells(cfg)
    logger.info(f"Table 2: {len(cells)} cells x {cfg.reps} reps, n={cfg.n}, workers={cfg.workers}")
    grouped = _group(cells, cfg.reps, _execute(_whittle_worker, _tasks(cfg, "table2", cells), cfg.workers))
    result_cells = [
        TableCell(H=H, h=h, reps=cfg.reps, rmse=rmse(grouped[(H, h)], H))
        for H, h in cells
    ]
    return TableResult(
        table_id="table2",
        statistic="rmse",
        cells=result_cells,
        n=cfg.n,
        reps=cfg.reps,
        master_seed=cfg.master_seed,
        workers=cfg.workers,
        runtime_seconds=time.perf_counter() - started,
        protocol=_protocol(cfg, target="H_hat", m=int(np.floor(cfg.n ** cfg.m_exponent))),
    )


def summarize_ase(values) -> Dict[str, float]:
    """Quartile summary {q1, median, mean, q3} of ASE values, ignoring skipped replications."""
    finite = np.asarray(values, dtype=float)
    finite = finite[np.isfinite(finite)]
    if finite.size == 0:
        raise DomainError("no usable ASE replications")
    q1, median, q3 = np.percentile(finite, [25, 50, 75])
    return {"q1": float(q1), "median": float(median), "mean": float(np.mean(finite)), "q3": float(q3)}


def run_ase_table(cfg: ExperimentConfig, H_fixed: float) -> TableResult:
    """Quartile summary of ASE(sigma2_hat) per h for a fixed H, over the 301-point grid."""
    started = time.perf_counter()
    cells = [(H_fixed, h) for h in cfg.h_grid]
    logger.info(f"ASE table H={H_fixed}: {len(cells)} cells x {cfg.reps} reps, n={cfg.n}")
    grouped = _group(cells, cfg.reps, _execute(_ase_worker, _tasks(cfg, "ase", cells), cfg.workers))
    result_cells = []
    for H, h in cells:
        values = grouped[(H, h)]
        bandwidth = _cell_bandwidth(cfg, H, h)
        result_cells.append(TableCell(
            H=H,
            h=h,
            reps=int(np.sum(np.isfinite(values))),
            bandwidth=f"{bandwidth.C:g}n^-{bandwidth.delta:g}",
            **summarize_ase(values),
        ))
    return TableResult(
        table_id=f"ase_H{H_fixed:g}",
        statistic="ase",
        cells=result_cells,
        n=cfg.n,
        reps=cfg.reps,
        master_seed=cfg.master_seed,
        workers=cfg.workers,
        runtime_seconds=time.perf_counter() - started,
        protocol=_protocol(cfg, H_fixed=H_fixed, grid="-1.50:0.01:1.50"),
    )


def run_rate_check(H: float, h: float, n: int, reps: int, master_seed: int = 20080101, factor: int = 4, workers: int = 1) -> Dict[str, float]:
    """
    Compare RMSE(beta1_hat) at n and factor * n with the rate implied by H + h.

    The expected shrinkage is sqrt(factor) when H + h < 3/2 and factor^{2 - H - h} otherwise.
    """
    values = {}
    for size in (n, factor * n):
        cfg = ExperimentConfig(n=size, reps=reps, H_grid=[H], h_grid=[h], master_seed=master_seed, workers=workers)
        values[size] = run_table1(cfg).cells[0].rmse
    expected = np.sqrt(factor) if H + h < 1.5 else factor ** (2.0 - H - h)
    return {
        "rmse_n": values[n],
        "rmse_factor_n": values[factor * n],
        "ratio": values[n] / values[factor * n],
        "expected_ratio": float(expected),
    }


def _correlation_worker(task) -> Tuple[float, float, float, float]:
    n, H, h, seed = task
    x = gen_fgn(n, h, seed=seed).values
    u = gen_farima_ma(n, H, seed=seed).values
    z_n2 = n ** (1.0 - H - h) * np.sum(x * u)
    z_n1 = n ** (-H) * np.sum(u)
    z_x = n ** (-h) * np.sum(x)
    star = n ** (1.0 - 2.0 * H) * np.sum(u * u - 1.0)
    return z_n2, z_n1, z_x, star


def run_correlation_checks(H: float, h: float, n: int, reps: int, master_seed: int = 20080101, workers: int = 1) -> Dict[str, float]:
    """
    Finite-n correlations against their limits:
    Correl(Z_n2, Z_n1 Z_n2) and Correl(n^{1-2H} sum(u^2 - 1), Z_n1^2).
    """
    tasks = [(n, H, h, derive_seed(master_seed, "correlation", H, h, rep)) for rep in range(reps)]
    draws = np.asarray(_execute(_correlation_worker, tasks, workers))
    z_n2, z_n1, z_x, star = draws.T
    return {
        "lemma22_empirical": float(np.corrcoef(z_n2, z_n1 * z_x)[0, 1]),
        "lemma22_limit": correl_lemma22(H, h),
        "thm31b_empirical": float(np.corrcoef(star, z_n1 ** 2)[0, 1]),
        "thm31b_limit": correl_thm31b(H) if H >= 0.75 else float("nan"),
    }


def _limit_worker(task) -> Tuple[float, float, float, float]:
    n, H, h, seed, beta, sigma_kind, bandwidth = task
    x, y, _ = simulate_model(n, H, h, seed, beta, sigma_kind)
    fit = fit_lse(x, y)
    loo = loo_variance(x, fit.residuals, bandwidth)
    c1, sigma0, gamma = plugin_constants(x, loo.V, np.sqrt(fit.s2))
    return n ** (2.0 - H - h) * (fit.beta_hat[1] - beta[1]), c1, sigma0, gamma


def run_limit_comparison(
    H: float,
    h: float,
    n: int,
    reps: int,
    grid_size: int = 64,
    master_seed: int = 20080101,
    plugin: bool = True,
    workers: int = 1,
) -> Dict[str, float]:
    """
    Kolmogorov-Smirnov distance between n^{2-H-h}(beta1_hat - beta1) and the discretized slope limit.

    With plugin the constants (c1, sigma0, gamma) are averages of the per-replication
    plug-in estimates; otherwise the population values for X ~ N(0, 1) are used.
    """
    beta = (0.0, 2.0)
    bandwidth = 3.0 * n ** -0.2
    tasks = [(n, H, h, derive_seed(master_seed, "limit", H, h, rep), beta, "1+x2", bandwidth) for rep in range(reps)]
    draws = np.asarray(_execute(_limit_worker, tasks, workers))
    scaled = draws[:, 0]
    if plugin:
        constants = tuple(float(v) for v in draws[:, 1:].mean(axis=0))
    else:
        sigma = sigma_function("1+x2")
        constants = (gaussian_expectation(lambda x: x * x * sigma(x)), gaussian_expectation(sigma), 1.0)
    limit = sample_z2(H, h, "composite_thm21", grid_size, reps, derive_seed(master_seed, "limit-draws"), constants)
    ks = stats.ks_2samp(scaled, limit.draws)
    return {
        "ks_statistic": float(ks.statistic),
        "ks_pvalue": float(ks.pvalue),
        "c1": constants[0],
        "sigma0": constants[1],
        "gamma": constants[2],
        "truncation": limit.truncation,
    }


def _size_worker(task) -> Optional[bool]:
    n, H, h, seed, bandwidth, m, alpha = task
    x, y, _ = simulate_model(n, H, h, seed)
    fit = fit_lse(x, y)
    loo = loo_variance(x, fit.residuals, bandwidth)
    standardized = np.divide(fit.residuals, loo.V, out=np.zeros_like(fit.residuals), where=loo.V > 0)
    whittle = local_whittle(standardized, m=m)
    try:
        return dn_test(x, y, fit, whittle, loo, Basis(), alpha).reject
    except DegenerateTestError as e:
        logger.warning(f"Size replication skipped: {e}")
        return None


def run_size_check(
    H: float = 0.6,
    h: float = 0.6,
    n: int = 500,
    reps: int = 500,
    alpha: float = 0.05,
    master_seed: int = 20080101,
    bandwidth_c: float = 3.0,
    bandwidth_delta: float = 0.2,
    workers: int = 1,
) -> Dict[str, float]:
    """
    Rejection rate of the lack-of-fit test under the null with sigma^2(x) = 1 + x^2.

    H and G are estimated on the standardized residuals e_t / V_t, which carry the
    unit-variance error; the statistic itself uses the raw residuals.
    """
    m = int(np.floor(n ** 0.8))
    bandwidth = bandwidth_c * n ** (-bandwidth_delta)
    tasks = [(n, H, h, derive_seed(master_seed, "size", H, h, rep), bandwidth, m, alpha) for rep in range(reps)]
    decisions = [d for d in _execute(_size_worker, tasks, workers) if d is not None]
    if not decisions:
        raise DomainError("every size replication was degenerate")
    return {"rejection_rate": float(np.mean(decisions)), "reps": len(decisions), "alpha": alpha}
