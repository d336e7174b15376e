# Data models package

from .data_models import (
    LMSeries,
    MemoryParams,
    Basis,
    FitResult,
    Kernel,
    Bandwidth,
    WhittleResult,
    GofResult,
    LimitLawSample,
    ExperimentConfig,
    TableResult,
    PipelineOptions,
    PipelineReport,
)

__all__ = [
    "LMSeries",
    "MemoryParams",
    "Basis",
    "FitResult",
    "Kernel",
    "Bandwidth",
    "WhittleResult",
    "GofResult",
    "LimitLawSample",
    "ExperimentConfig",
    "TableResult",
    "PipelineOptions",
    "PipelineReport",
]
