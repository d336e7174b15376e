"""
Configuration management for the long-memory regression toolkit.
Uses Pydantic Settings for environment variable management.
"""

from typing import List, Optional

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Application settings loaded from environment variables (prefix LMREG_)."""

    model_config = SettingsConfigDict(
        env_prefix="LMREG_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    # Application Configuration
    app_name: str = Field(default="Long-Memory Regression Diagnostics")
    app_version: str = Field(default="1.0.0")
    debug: bool = Field(default=False)
    log_level: str = Field(default="INFO")

    # Execution
    default_seed: Optional[int] = Field(default=None, ge=0)
    threads: int = Field(default=1, ge=1)
    output_format: str = Field(default="json", pattern="^(csv|json)$")

    # Simulation
    ma_burn_in_min: int = Field(default=10_000, ge=1)

    # Local Whittle
    whittle_a1: float = Field(default=0.501, gt=0.5, lt=1.0)
    whittle_a2: float = Field(default=0.999, gt=0.5, lt=1.0)
    whittle_m_fraction: float = Field(default=0.125, gt=0.0, lt=0.5)
    table_m_exponent: float = Field(default=0.8, gt=0.0, lt=1.0)

    # Kernel variance estimation
    default_kernel: str = Field(default="cosine", pattern="^(cosine|uniform|gaussian)$")
    bandwidth_delta: float = Field(default=0.2, gt=0.0)
    bandwidth_delta_long: float = Field(default=0.099, gt=0.0)
    pipeline_bandwidth_c: float = Field(default=3.0, gt=0.0)
    gaussian_truncation: float = Field(default=8.0, gt=0.0)
    support_sd: float = Field(default=6.0, gt=0.0)

    # Limit laws
    z2_grid_size: int = Field(default=64, ge=64)
    z2_tail_tolerance: float = Field(default=1e-3, gt=0.0, lt=1.0)

    # Testing and ingestion
    significance_level: float = Field(default=0.05, gt=0.0, lt=1.0)
    missing_markers: List[str] = Field(default_factory=lambda: ["ND", ""])


# Global settings instance
settings = Settings()
