"""
Analysis API endpoints: simulation, least-squares fit, local Whittle, the lack-of-fit test,
limit-law draws and the block-bootstrap kappa_2.

Toolkit errors propagate to the application handler, which answers 422 with
the error class name.
"""

import logging
from typing import Any, Dict, List, Literal, Optional, Tuple

import numpy as np
from fastapi import APIRouter, HTTPException, Query
from pydantic import BaseModel, Field, model_validator

from app.config import settings
from app.models.data_models import Basis, KernelKind
from app.services.exceptions import LMRegressionError
from app.services.goodness_of_fit import check_nondegenerate_residuals, dn_test, loo_variance
from app.services.kernel_variance import bandwidth_range, get_kernel
from app.services.limit_laws import default_block_len, kappa2_block_bootstrap, kappa2_summands, sample_z2
from app.services.lm_simulation import gen_farima_ma, gen_fgn
from app.services.random_streams import fresh_seed
from app.services.regression import fit_lse
from app.services.whittle import local_whittle

logger = logging.getLogger(__name__)

router = APIRouter()

MAX_SIMULATION_LENGTH = 1_000_000
MAX_LIMIT_DRAWS = 100_000


class SimulateRequest(BaseModel):
    """Simulation request; h applies to fgn and H to farima_ma."""
    kind: Literal["fgn", "farima_ma"] = "fgn"
    n: int = Field(..., ge=2, le=MAX_SIMULATION_LENGTH)
    h: Optional[float] = None
    H: Optional[float] = None
    seed: Optional[int] = Field(default=None, ge=0)
    burn_in: Optional[int] = Field(default=None, ge=1)

    @model_validator(mode="after")
    def check_parameter(self) -> "SimulateRequest":
        if self.kind == "fgn" and self.h is None:
            raise ValueError("fgn requires h")
        if self.kind == "farima_ma" and self.H is None:
            raise ValueError("farima_ma requires H")
        return self


class PairRequest(BaseModel):
    x: List[float] = Field(..., min_length=2)
    y: List[float] = Field(..., min_length=2)
    basis: Literal["simple_linear", "polynomial", "through_origin"] = "simple_linear"
    degree: int = Field(default=1, ge=1)


class WhittleRequest(BaseModel):
    series: List[float] = Field(..., min_length=4)
    m: Optional[int] = Field(default=None, ge=1)
    a1: Optional[float] = None
    a2: Optional[float] = None


class GofRequest(PairRequest):
    bandwidth_c: float = Field(default=3.0, gt=0.0)
    bandwidth_delta: float = Field(default=0.2, gt=0.0)
    kernel: KernelKind = "cosine"
    m: Optional[int] = Field(default=None, ge=1)
    alpha: float = Field(default=0.05, gt=0.0, lt=1.0)


class Z2Request(BaseModel):
    """Limit-law draws; constants (c1, sigma0, gamma) are required for composite_thm21."""
    H: float = Field(..., gt=0.5, lt=1.0)
    h: float = Field(..., gt=0.5, lt=1.0)
    kind: Literal["Z2_independent", "Z2_star", "composite_thm21"] = "Z2_independent"
    n_draws: int = Field(default=1000, ge=2, le=MAX_LIMIT_DRAWS)
    grid_size: Optional[int] = Field(default=None, ge=64)
    constants: Optional[Tuple[float, float, float]] = None
    seed: Optional[int] = Field(default=None, ge=0)


class Kappa2Request(PairRequest):
    block_len: Optional[int] = Field(default=None, ge=1)
    B: int = Field(default=500, ge=2)
    weighted: bool = False
    bandwidth_c: float = Field(default=3.0, gt=0.0)
    bandwidth_delta: float = Field(default=0.2, gt=0.0)
    kernel: KernelKind = "cosine"
    seed: Optional[int] = Field(default=None, ge=0)


def _guard(action: str, func, *args, **kwargs):
    """Run a computation, letting toolkit errors through and turning the rest into 500."""
    try:
        return func(*args, **kwargs)
    except LMRegressionError:
        raise
    except Exception as e:
        logger.error(f"{action} failed: {str(e)}")
        raise HTTPException(status_code=500, detail=f"{action} failed")


@router.post("/simulate")
def simulate(request: SimulateRequest) -> Dict[str, Any]:
    """
    Simulate fractional Gaussian noise or FARIMA errors.

    Returns:
        LMSeries as JSON; the seed is filled in when none was given
    """
    seed = request.seed if request.seed is not None else fresh_seed()
    if request.kind == "fgn":
        series = _guard("Simulation", gen_fgn, request.n, request.h, seed=seed)
    else:
        series = _guard("Simulation", gen_farima_ma, request.n, request.H, seed=seed, burn_in=request.burn_in)
    logger.info(f"Simulated {request.kind} n={request.n} seed={seed}")
    return series.model_dump(mode="json")


@router.post("/fit")
def fit(request: PairRequest) -> Dict[str, Any]:
    result = _guard("Fit", fit_lse, request.x, request.y, Basis(kind=request.basis, degree=request.degree))
    return result.model_dump(mode="json")


@router.post("/whittle")
def whittle(request: WhittleRequest) -> Dict[str, Any]:
    bracket = None
    if request.a1 is not None or request.a2 is not None:
        bracket = (
            settings.whittle_a1 if request.a1 is None else request.a1,
            settings.whittle_a2 if request.a2 is None else request.a2,
        )
    result = _guard("Local Whittle", local_whittle, request.series, m=request.m, bracket=bracket)
    return result.model_dump(mode="json")


def _goftest(request: GofRequest):
    x = np.asarray(request.x, dtype=float)
    basis = Basis(kind=request.basis, degree=request.degree)
    fitted = fit_lse(x, request.y, basis)
    check_nondegenerate_residuals(request.y, fitted)
    bandwidth = request.bandwidth_c * x.size ** (-request.bandwidth_delta)
    loo = loo_variance(x, fitted.residuals, bandwidth, get_kernel(request.kernel))
    standardized = np.divide(fitted.residuals, loo.V, out=np.zeros_like(fitted.residuals), where=loo.V > 0)
    return dn_test(x, request.y, fitted, local_whittle(standardized, m=request.m), loo, basis, request.alpha)


@router.post("/goftest")
def goftest(request: GofRequest) -> Dict[str, Any]:
    """
    Lack-of-fit test of the regression of y on r(x).

    Returns:
        GofResult as JSON with the Dn key
    """
    result = _guard("Lack-of-fit test", _goftest, request)
    return result.to_cli_json()


@router.get("/bandwidth-range")
def get_bandwidth_range(H: float = Query(..., gt=0.5, lt=1.0), h: float = Query(..., gt=0.5, lt=1.0)) -> Dict[str, Any]:
    """Admissible exponents delta for b = C n^-delta at (H, h)."""
    case, lo, hi = bandwidth_range(H, h)
    return {"case": case, "lo": lo, "hi": hi}


@router.post("/z2")
def z2_draws(request: Z2Request) -> Dict[str, Any]:
    """
    Draws of a double Wiener-Ito limit variable.

    Returns:
        LimitLawSample as JSON; the seed is filled in when none was given
    """
    seed = request.seed if request.seed is not None else fresh_seed()
    sample = _guard(
        "Limit-law sampling", sample_z2,
        request.H, request.h, request.kind, request.grid_size, request.n_draws, seed, request.constants,
    )
    logger.info(f"Drew {request.n_draws} {request.kind} values at H={request.H}, h={request.h}")
    return sample.model_dump(mode="json", exclude={"z1", "z2"})


def _kappa2(request: Kappa2Request, seed: int) -> Dict[str, Any]:
    x = np.asarray(request.x, dtype=float)
    fitted = fit_lse(x, request.y, Basis(kind=request.basis, degree=request.degree))
    V = None
    if request.weighted:
        bandwidth = request.bandwidth_c * x.size ** (-request.bandwidth_delta)
        V = loo_variance(x, fitted.residuals, bandwidth, get_kernel(request.kernel))
    block_len = request.block_len or default_block_len(x.size)
    kappa2 = kappa2_block_bootstrap(kappa2_summands(x, fitted.residuals, V), block_len, request.B, seed)
    return {"kappa2": kappa2, "n": int(x.size), "block_len": block_len, "B": request.B, "weighted": request.weighted, "seed": seed}


@router.post("/kappa2")
def kappa2(request: Kappa2Request) -> Dict[str, Any]:
    """Moving-block bootstrap estimate of kappa_2 from the fitted residuals."""
    seed = request.seed if request.seed is not None else fresh_seed()
    return _guard("Block bootstrap", _kappa2, request, seed)
