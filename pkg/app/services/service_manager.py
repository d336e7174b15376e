"""
Service manager for coordinating the estimation services.

This module provides service start-up checks, health status and the
orchestration of the exchange-rate analysis from ingestion to the lack-of-fit
decision.
"""

import hashlib
import logging
from contextlib import contextmanager
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Iterator, Optional, Tuple, Union

import numpy as np

from app.config import settings
from app.models.data_models import Basis, FitResult, LooVariance, PipelineOptions, PipelineReport, SeriesStats
from app.services.exceptions import LMRegressionError, PipelineStageError
from app.services.fx_ingestion import FxIngestionService
from app.services.goodness_of_fit import check_nondegenerate_residuals, dn_test, loo_variance
from app.services.kernel_variance import get_kernel, sigma2_grid
from app.services.lm_simulation import gen_farima_ma, gen_fgn
from app.services.regression import fit_lse, slope_only_residuals
from app.services.whittle import default_m, local_whittle

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def _file_digest(path: PathLike) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _stats(values: np.ndarray) -> SeriesStats:
    return SeriesStats(mean=float(np.mean(values)), sd=float(np.std(values, ddof=1)), n=int(values.size))


def standardize_residuals(residuals: np.ndarray, sigma_hat: np.ndarray) -> np.ndarray:
    """u_hat = e / sigma_hat(X); zero where the variance estimate vanishes."""
    return np.divide(residuals, sigma_hat, out=np.zeros_like(residuals), where=sigma_hat > 0)


@contextmanager
def pipeline_stage(name: str) -> Iterator[None]:
    """Label toolkit errors raised inside the block with the stage name."""
    logger.info(f"Pipeline stage: {name}")
    try:
        yield
    except PipelineStageError:
        raise
    except LMRegressionError as e:
        logger.error(f"Pipeline stage {name} failed: {e}")
        raise PipelineStageError(name, e) from e


class ServiceManager:
    """
    Central service manager for the estimation services.

    Runs a small simulate-and-estimate round trip at start-up as a numerical
    self-check and orchestrates the exchange-rate pipeline.
    """

    SELF_CHECK_N: int = 256
    SELF_CHECK_SEED: int = 7

    def __init__(self):
        self._initialized = False
        self._services_healthy = False
        self._last_health_check: Optional[datetime] = None
        self._pipelines_run = 0
        self._pipelines_failed = 0
        self.ingestion_service: Optional[FxIngestionService] = None

    async def initialize_services(self) -> bool:
        """
        Initialize services and perform the start-up self-check.

        Returns:
            True if the self-check passed, False otherwise
        """
        try:
            logger.info("Initializing estimation services...")
            self.ingestion_service = FxIngestionService()
            checks = self._self_check()
            self._initialized = True
            self._services_healthy = all(checks.values())
            self._last_health_check = datetime.now(timezone.utc)
            if self._services_healthy:
                logger.info("All services initialized successfully")
            else:
                logger.warning(f"Self-check failed: {checks}")
            return self._services_healthy
        except Exception as e:
            logger.error(f"Failed to initialize services: {str(e)}")
            return False

    def _self_check(self) -> Dict[str, bool]:
        """Simulate a short design and error series and estimate their memory."""
        checks = {}
        try:
            x = gen_fgn(self.SELF_CHECK_N, 0.75, seed=self.SELF_CHECK_SEED)
            checks["simulation"] = bool(np.all(np.isfinite(x.values)))
            u = gen_farima_ma(self.SELF_CHECK_N, 0.75, seed=self.SELF_CHECK_SEED, burn_in=self.SELF_CHECK_N)
            checks["whittle"] = 0.5 < local_whittle(u).H_hat < 1.0
            fit = fit_lse(x.values, 2.0 * x.values + u.values)
            checks["regression"] = bool(np.isfinite(fit.beta_hat).all())
        except Exception as e:
            logger.error(f"Numerical self-check raised: {e}")
            checks.setdefault("simulation", False)
            checks.setdefault("whittle", False)
            checks.setdefault("regression", False)
        return checks

    def run_pipeline(self, x_file: PathLike, y_file: PathLike, options: Optional[PipelineOptions] = None) -> PipelineReport:
        """
        Exchange-rate lack-of-fit analysis of y on x.

        Stages: ingest, whittle_inputs, fit, residual_check, variance, whittle_residuals,
        goftest. Every error is re-raised as PipelineStageError naming its stage.
        The report depends only on the inputs and options.
        """
        options = options or PipelineOptions()
        self.ingestion_service = self.ingestion_service or FxIngestionService()
        self._pipelines_run += 1
        try:
            return self._run_pipeline(x_file, y_file, options)
        except PipelineStageError:
            self._pipelines_failed += 1
            raise

    def _run_pipeline(self, x_file: PathLike, y_file: PathLike, options: PipelineOptions) -> PipelineReport:
        with pipeline_stage("ingest"):
            pair = self.ingestion_service.ingest_pair(x_file, y_file, options.column, options.monthly)
            x = pair["x"].to_numpy()
            y = pair["y"].to_numpy()
        n = x.size
        m = options.m or default_m(n)

        with pipeline_stage("whittle_inputs"):
            whittle_x = local_whittle(x, m=m)
            whittle_y = local_whittle(y, m=m)

        basis = Basis(kind="simple_linear")
        with pipeline_stage("fit"):
            fit = fit_lse(x, y, basis)

        with pipeline_stage("residual_check"):
            check_nondegenerate_residuals(y, fit)

        with pipeline_stage("variance"):
            residuals, sigma_hat, loo, bandwidth = self._variance(x, y, fit, options)

        with pipeline_stage("whittle_residuals"):
            whittle_residuals = local_whittle(residuals, m=m)
            whittle_standardized = local_whittle(standardize_residuals(residuals, sigma_hat), m=m)

        with pipeline_stage("goftest"):
            gof = dn_test(x, y, fit, whittle_standardized, loo, basis, options.alpha)

        logger.info(f"Pipeline finished: n={n}, D_n={gof.D_n:.6f}, reject={gof.reject}")
        return PipelineReport(
            x_stats=_stats(x),
            y_stats=_stats(y),
            whittle_x=whittle_x,
            whittle_y=whittle_y,
            fit=fit.summary(),
            bandwidth=bandwidth,
            whittle_residuals=whittle_residuals,
            whittle_standardized=whittle_standardized,
            gof=gof,
            decision="reject" if gof.reject else "fail_to_reject",
            provenance={
                "x_file": Path(x_file).name,
                "y_file": Path(y_file).name,
                "x_sha256": _file_digest(x_file),
                "y_sha256": _file_digest(y_file),
                "options": options.model_dump(),
                "version": settings.app_version,
            },
        )

    @staticmethod
    def _variance(
        x: np.ndarray, y: np.ndarray, fit: FitResult, options: PipelineOptions
    ) -> Tuple[np.ndarray, np.ndarray, LooVariance, float]:
        """Kernel sigma_hat(X_t) for standardizing the residuals; the leave-one-out V feeds D_n only."""
        residuals = fit.residuals if options.whittle_residuals == "full" else slope_only_residuals(x, y, fit)
        bandwidth = options.bandwidth_c * x.size ** (-options.bandwidth_delta)
        kernel = get_kernel(options.kernel)
        sigma_hat = np.sqrt(sigma2_grid(x, x, fit.residuals, bandwidth, kernel))
        loo = loo_variance(x, fit.residuals, bandwidth, kernel, standardize=True)
        return np.asarray(residuals, dtype=float), sigma_hat, loo, float(bandwidth)

    async def get_health_status(self) -> Dict[str, Any]:
        """
        Health status of the services.

        Returns:
            Dictionary containing health status information
        """
        try:
            health_status = {
                "overall_status": "unknown",
                "initialized": self._initialized,
                "last_check": self._last_health_check.isoformat() if self._last_health_check else None,
                "services": {},
            }
            if not self._initialized:
                health_status["overall_status"] = "not_initialized"
                return health_status

            checks = self._self_check()
            health_status["services"] = {name: "healthy" if ok else "unhealthy" for name, ok in checks.items()}
            health_status["services"]["ingestion"] = "healthy" if self.ingestion_service else "unhealthy"
            self._services_healthy = all(checks.values())
            health_status["overall_status"] = "healthy" if self._services_healthy else "degraded"
            self._last_health_check = datetime.now(timezone.utc)
            return health_status
        except Exception as e:
            logger.error(f"Health check failed: {str(e)}")
            return {
                "overall_status": "error",
                "initialized": self._initialized,
                "error": str(e),
                "last_check": datetime.now(timezone.utc).isoformat(),
            }

    async def get_system_stats(self) -> Dict[str, Any]:
        return {
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "services_initialized": self._initialized,
            "services_healthy": self._services_healthy,
            "pipelines": {"run": self._pipelines_run, "failed": self._pipelines_failed},
            "threads": settings.threads,
        }

    async def shutdown_services(self):
        logger.info("Shutting down services...")
        self.ingestion_service = None
        self._initialized = False
        self._services_healthy = False
        logger.info("Services shutdown completed")


# Global service manager instance
_service_manager_instance = None


def get_service_manager_sync() -> ServiceManager:
    """Get the global service manager instance synchronously."""
    global _service_manager_instance
    if _service_manager_instance is None:
        _service_manager_instance = ServiceManager()
    return _service_manager_instance


async def get_service_manager() -> ServiceManager:
    """
    Get the global service manager instance.

    Returns:
        ServiceManager instance (initialized by the FastAPI lifespan)
    """
    return get_service_manager_sync()


service_manager = get_service_manager_sync()
