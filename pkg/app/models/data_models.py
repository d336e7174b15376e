"""
Core data models for the long-memory regression toolkit.

This module defines the Pydantic models used throughout the system for
simulated and ingested series, regression fits, variance estimates, local
Whittle results, lack-of-fit test output, limit-law samples and Monte Carlo
tables. Numeric vectors are stored as numpy arrays and serialized as lists.
"""

from datetime import date
from typing import Any, Callable, Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    PlainSerializer,
    PlainValidator,
    WithJsonSchema,
    computed_field,
    field_validator,
    model_validator,
)
from typing_extensions import Annotated

from app.config import settings


def _to_float_array(value: Any) -> np.ndarray:
    return np.asarray(value, dtype=float)


FloatArray = Annotated[
    np.ndarray,
    PlainValidator(_to_float_array),
    PlainSerializer(lambda a: np.asarray(a).tolist(), return_type=list),
    WithJsonSchema({"type": "array", "items": {"type": "number"}}),
]

SeriesKind = Literal["fgn", "farima_ma", "ingested"]
BasisKind = Literal["simple_linear", "polynomial", "through_origin", "custom"]
KernelKind = Literal["cosine", "uniform", "gaussian"]
LimitKind = Literal["Z2_independent", "Z2_star", "composite_thm21"]


class ArrayModel(BaseModel):
    """Base for models carrying numpy arrays."""

    model_config = ConfigDict(arbitrary_types_allowed=True)


class MemoryParams(BaseModel):
    """
    Memory parameters of the design (h) and error (H) processes.

    Attributes:
        h: Design memory parameter; 0.5 is accepted only as the white-noise boundary
        H: Error memory parameter; 0.5 is accepted only as the white-noise boundary
    """
    h: Optional[float] = Field(default=None, ge=0.5, lt=1.0, description="Design memory parameter")
    H: Optional[float] = Field(default=None, ge=0.5, lt=1.0, description="Error memory parameter")


class LMSeries(ArrayModel):
    """
    A simulated or ingested real-valued time series.

    Attributes:
        values: The observations
        kind: Origin of the series (fgn, farima_ma, ingested)
        params: Declared memory parameters, when known
        seed: Seed that reproduces a simulated series
    """
    values: FloatArray = Field(..., description="Series values")
    kind: SeriesKind = Field(..., description="Origin of the series")
    params: Optional[MemoryParams] = Field(default=None, description="Declared memory parameters")
    seed: Optional[int] = Field(default=None, ge=0, description="Seed used for simulation")

    @field_validator("values")
    @classmethod
    def validate_values(cls, v: np.ndarray) -> np.ndarray:
        if v.ndim != 1 or v.size < 2:
            raise ValueError("series must be one-dimensional with at least 2 values")
        if not np.all(np.isfinite(v)):
            raise ValueError("series values must all be finite")
        return v

    @property
    def n(self) -> int:
        return int(self.values.size)


class MACoefficients(ArrayModel):
    """
    Normalized moving-average coefficients of a FARIMA(0, H - 1/2, 0) process.

    Attributes:
        b: Coefficients b_0..b_J after normalization
        J: Truncation length
        norm_error: Variance deficit 1 - sum of b_j^2 caused by truncation
        normalizer: Analytic square-root normalizer applied to the raw coefficients
        d: Fractional differencing parameter H - 1/2
    """
    b: FloatArray
    J: int = Field(..., ge=1)
    norm_error: float = Field(..., ge=0.0)
    normalizer: float = Field(..., gt=0.0)
    d: float


class Basis(ArrayModel):
    """
    Regression basis r(x).

    Attributes:
        kind: simple_linear (1, x), polynomial (1, x, ..., x^p),
              through_origin (x, ..., x^p) or custom
        degree: Polynomial degree for polynomial and through_origin bases
        functions: Coordinate functions for the custom basis
    """
    kind: BasisKind = Field(default="simple_linear")
    degree: int = Field(default=1, ge=1)
    functions: Optional[List[Callable[..., Any]]] = Field(default=None, exclude=True)

    @model_validator(mode="after")
    def validate_custom(self) -> "Basis":
        if self.kind == "custom" and not self.functions:
            raise ValueError("custom basis requires at least one function")
        return self

    @property
    def q(self) -> int:
        if self.kind == "simple_linear":
            return 2
        if self.kind == "polynomial":
            return self.degree + 1
        if self.kind == "through_origin":
            return self.degree
        return len(self.functions)

    @property
    def has_constant(self) -> bool:
        return self.kind in ("simple_linear", "polynomial")

    def evaluate(self, x: Any) -> np.ndarray:
        """Return the n x q matrix with rows r(x_t)'."""
        x = np.asarray(x, dtype=float)
        if self.kind == "simple_linear":
            return np.column_stack([np.ones_like(x), x])
        if self.kind == "polynomial":
            return np.vander(x, self.degree + 1, increasing=True)
        if self.kind == "through_origin":
            return np.vander(x, self.degree + 1, increasing=True)[:, 1:]
        return np.column_stack([np.broadcast_to(np.asarray(f(x), dtype=float), x.shape) for f in self.functions])


class FitResult(ArrayModel):
    """
    Least-squares fit of Y on r(X).

    Attributes:
        beta_hat: Coefficient estimates
        residuals: e_t = Y_t - beta_hat' r(X_t)
        xbar: Sample mean of X
        s2: Sample variance of X with the 1/n convention
        An: Sample moment matrix sum r(X_t) r(X_t)' / n
        residual_se: sqrt(sum e_t^2 / (n - q))
        n: Sample size
        basis_kind: Kind of the basis used
    """
    beta_hat: FloatArray
    residuals: FloatArray
    xbar: float
    s2: float = Field(..., ge=0.0)
    An: FloatArray
    residual_se: float = Field(..., ge=0.0)
    n: int = Field(..., ge=2)
    basis_kind: BasisKind

    def summary(self) -> Dict[str, Any]:
        """JSON export used by the CLI and HTTP layers."""
        return {
            "beta_hat": self.beta_hat.tolist(),
            "residual_se": self.residual_se,
            "n": self.n,
            "basis_kind": self.basis_kind,
        }


class Kernel(BaseModel):
    """
    Symmetric density kernel K.

    Attributes:
        kind: cosine 0.5(1 + cos(pi v)) on [-1, 1], uniform on [-1, 1], or gaussian density
        truncation: Numerical support radius of the gaussian kernel
    """
    kind: KernelKind = Field(default="cosine")
    truncation: float = Field(default=8.0, gt=0.0)

    @property
    def compact(self) -> bool:
        return self.kind != "gaussian"

    @property
    def radius(self) -> float:
        return 1.0 if self.compact else self.truncation

    def __call__(self, v: Any) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        inside = np.abs(v) <= self.radius
        if self.kind == "cosine":
            values = 0.5 * (1.0 + np.cos(np.pi * v))
        elif self.kind == "uniform":
            values = np.full_like(v, 0.5)
        else:
            values = np.exp(-0.5 * v * v) / np.sqrt(2.0 * np.pi)
        return np.where(inside, values, 0.0)


class Bandwidth(BaseModel):
    """
    Bandwidth b = C n^(-delta).

    Attributes:
        C: Positive multiplier
        delta: Rate exponent
        n: Sample size
    """
    C: float = Field(..., gt=0.0)
    delta: float = Field(..., ge=0.0)
    n: int = Field(..., ge=1)

    @computed_field
    @property
    def b(self) -> float:
        return self.C * float(self.n) ** (-self.delta)


class VarianceEstimate(BaseModel):
    """Kernel estimate of sigma^2(x) at one evaluation point."""
    x: float
    value: float = Field(..., ge=0.0)
    b: float = Field(..., gt=0.0)
    phi_n_x: float = Field(..., gt=0.0)


class Periodogram(ArrayModel):
    """
    Periodogram ordinates I(lambda_j), j = 1..floor(n/2), at Fourier frequencies.

    Attributes:
        ordinates: I(lambda_j)
        freqs: lambda_j = 2 pi j / n
        n: Length of the transformed series
    """
    ordinates: FloatArray
    freqs: FloatArray
    n: int = Field(..., ge=4)


class WhittleResult(BaseModel):
    """
    Local Whittle estimates.

    Attributes:
        H_hat: Memory estimate inside the bracket
        G_hat: Q(H_hat)
        psi1_hat: sqrt(G_hat * D(H_hat))
        m: Number of Fourier frequencies used
        bracket: Search interval (a1, a2)
        minimizer_iterations: Objective evaluations spent by the search
        clamped: True when H_hat sits on a bracket end
    """
    H_hat: float
    G_hat: float = Field(..., gt=0.0)
    psi1_hat: float = Field(..., ge=0.0)
    m: int = Field(..., ge=1)
    bracket: Tuple[float, float]
    minimizer_iterations: int = Field(default=0, ge=0)
    clamped: bool = False

    def to_cli_json(self) -> Dict[str, Any]:
        return {
            "H_hat": self.H_hat,
            "G_hat": self.G_hat,
            "psi1_hat": self.psi1_hat,
            "m": self.m,
            "a1": self.bracket[0],
            "a2": self.bracket[1],
            "minimizer_iterations": self.minimizer_iterations,
        }


class ConditionCheck(BaseModel):
    """Evaluation of the bandwidth growth condition for the Whittle estimator."""
    value: float = Field(..., gt=0.0)
    satisfied_trend: bool
    rate_exponent: float


class StepFunction(ArrayModel):
    """
    Right-continuous step function with jumps at the order statistics of X.

    The value at -infinity is 0 and the value at +infinity is the last cumulative value.
    """
    knots: FloatArray
    values: FloatArray

    @model_validator(mode="after")
    def validate_shape(self) -> "StepFunction":
        if self.knots.shape != self.values.shape:
            raise ValueError("knots and values must have the same length")
        if self.knots.size > 1 and np.any(np.diff(self.knots) < 0):
            raise ValueError("knots must be sorted")
        return self

    def __call__(self, x: Any) -> np.ndarray:
        idx = np.searchsorted(self.knots, np.asarray(x, dtype=float), side="right") - 1
        padded = np.concatenate([[0.0], self.values])
        return padded[idx + 1]

    @property
    def sup_abs(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    @property
    def value_at_infinity(self) -> float:
        return float(self.values[-1]) if self.values.size else 0.0


class LooVariance(ArrayModel):
    """
    Leave-one-out variance estimates V_i(X_i).

    Attributes:
        V: V_i(X_i) = Lambda_{-i}(X_i) phi^(-1/2)(X_i)
        lam: Lambda_{-i}(X_i)
        b: Bandwidth used
        kernel_kind: Kernel used
        standardized: Whether X was studentized by (X bar, s) first
    """
    V: FloatArray
    lam: FloatArray
    b: float = Field(..., gt=0.0)
    kernel_kind: KernelKind
    standardized: bool = True

    @field_validator("V", "lam")
    @classmethod
    def validate_nonnegative(cls, v: np.ndarray) -> np.ndarray:
        if np.any(v < 0):
            raise ValueError("leave-one-out values must be nonnegative")
        return v


class GofResult(BaseModel):
    """Outcome of the lack-of-fit test D_n."""
    D_n: float = Field(..., ge=0.0)
    p_value: float = Field(..., ge=0.0, le=1.0)
    sup_V: float = Field(..., ge=0.0)
    sup_J: float = Field(..., gt=0.0)
    H_hat: float
    psi1_hat: float = Field(..., gt=0.0)
    n: int
    alpha: float
    critical_value: float
    reject: bool

    def to_cli_json(self) -> Dict[str, Any]:
        return {
            "Dn": self.D_n,
            "p_value": self.p_value,
            "sup_V": self.sup_V,
            "sup_J": self.sup_J,
            "H_hat": self.H_hat,
            "psi1_hat": self.psi1_hat,
            "n": self.n,
            "alpha": self.alpha,
            "reject": self.reject,
        }


class LimitLawSample(ArrayModel):
    """
    Monte Carlo draws of a nonstandard limit variable.

    Attributes:
        draws: Draws of the requested variable
        grid_size: Cells per unit length on the fine part of the grid
        kind: Z2_independent, Z2_star or composite_thm21
        truncation: Left end -T of the truncated integration domain
        tail_fraction: Estimated variance share lost to the truncation
        z1, z2: Jointly drawn single-integral components (Z_1, Z_2)
        seed: Seed of the draws
    """
    draws: FloatArray
    grid_size: int = Field(..., ge=64)
    kind: LimitKind
    truncation: float = Field(..., gt=0.0)
    tail_fraction: float = Field(..., ge=0.0)
    z1: Optional[FloatArray] = None
    z2: Optional[FloatArray] = None
    seed: Optional[int] = None


class ExperimentConfig(BaseModel):
    """
    Monte Carlo experiment configuration.

    Defaults reproduce the simulation protocol: beta = (0, 2), sigma^2(x) = 1 + x^2,
    FARIMA errors and fractional Gaussian noise design.
    """
    n: int = Field(default=500, ge=8)
    reps: int = Field(default=200, ge=1)
    H_grid: List[float] = Field(default_factory=lambda: [0.6, 0.75, 0.9])
    h_grid: List[float] = Field(default_factory=lambda: [0.6, 0.75, 0.9])
    beta: Tuple[float, float] = (0.0, 2.0)
    sigma_kind: str = Field(default="1+x2")
    kernel: KernelKind = Field(default="cosine")
    estimator: Literal["kernel", "nadaraya_watson"] = "kernel"
    bandwidth_c: Optional[float] = Field(default=None, gt=0.0)
    bandwidth_delta: Optional[float] = Field(default=None, gt=0.0)
    m_exponent: float = Field(default_factory=lambda: settings.table_m_exponent, gt=0.0, lt=1.0)
    whittle_residuals: Literal["slope_only", "full"] = "slope_only"
    master_seed: int = Field(default=20080101, ge=0)
    workers: int = Field(default=1, ge=1)

    @field_validator("H_grid", "h_grid")
    @classmethod
    def validate_grid(cls, v: List[float]) -> List[float]:
        if not v:
            raise ValueError("parameter grid must not be empty")
        if any(not (0.5 < p < 1.0) for p in v):
            raise ValueError("memory parameters must lie in (1/2, 1)")
        return v


class TableCell(BaseModel):
    """One (H, h) cell of a Monte Carlo table."""
    H: float
    h: float
    reps: int
    rmse: Optional[float] = Field(default=None, ge=0.0)
    q1: Optional[float] = Field(default=None, ge=0.0)
    median: Optional[float] = Field(default=None, ge=0.0)
    mean: Optional[float] = Field(default=None, ge=0.0)
    q3: Optional[float] = Field(default=None, ge=0.0)
    bandwidth: Optional[str] = None


class TableResult(BaseModel):
    """A regenerated simulation table with provenance."""
    table_id: str
    statistic: Literal["rmse", "ase"]
    cells: List[TableCell]
    n: int
    reps: int
    master_seed: int
    workers: int
    runtime_seconds: float = Field(default=0.0, ge=0.0)
    protocol: Dict[str, Any] = Field(default_factory=dict)

    def cell(self, H: float, h: float) -> TableCell:
        for c in self.cells:
            if np.isclose(c.H, H) and np.isclose(c.h, h):
                return c
        raise KeyError(f"no cell for H={H}, h={h}")


class FxRecord(BaseModel):
    """One row of an exchange-rate file; rate is None for a missing marker."""
    date: date
    rate: Optional[float] = Field(default=None, gt=0.0)


class SeriesStats(BaseModel):
    mean: float
    sd: float
    n: int


class PipelineReport(BaseModel):
    """End-to-end report of the exchange-rate lack-of-fit analysis."""
    x_stats: SeriesStats
    y_stats: SeriesStats
    whittle_x: WhittleResult
    whittle_y: WhittleResult
    fit: Dict[str, Any]
    bandwidth: float
    whittle_residuals: WhittleResult
    whittle_standardized: WhittleResult
    gof: GofResult
    decision: Literal["reject", "fail_to_reject"]
    provenance: Dict[str, Any] = Field(default_factory=dict)


class PipelineOptions(BaseModel):
    """Options of the exchange-rate analysis; defaults follow the monthly exchange-rate study."""
    column: str = Field(default="value", description="Rate column in both files")
    monthly: bool = Field(default=False, description="Keep the last observation of each month")
    kernel: KernelKind = Field(default="cosine")
    bandwidth_c: float = Field(default=3.0, gt=0.0)
    bandwidth_delta: float = Field(default=0.2, gt=0.0)
    m: Optional[int] = Field(default=None, ge=1, description="Fourier frequencies; floor(n/8) when omitted")
    whittle_residuals: Literal["full", "slope_only"] = "full"
    alpha: float = Field(default=0.05, gt=0.0, lt=1.0)
    seed: Optional[int] = Field(default=None, ge=0, description="Seed for the QQ simulation")
