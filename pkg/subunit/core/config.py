# subunit/core/config.py
import os
from pathlib import Path
from typing import Optional

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    # Reproducibility and parallelism
    seed: int = 20240601
    threads: int = Field(default_factory=lambda: os.cpu_count() or 1, ge=1)

    # Protocol defaults
    k_max: int = 30
    seqs_per_k: int = 500

    # Numerical tolerances
    cptp_tol: float = 1e-10
    kraus_cutoff: float = 1e-12
    degeneracy_rtol: float = 1e-8
    rank_rtol: float = 1e-9
    collapse_tol: float = 1e-4
    amplitude_rtol: float = 1e-6
    lambda_bound: float = 1.05
    witness_guard: float = 1e-9

    # Output settings
    output_dir: Path = Path("subunit_runs")

    # Logging settings
    log_file: Optional[str] = None
    environment: str = "production"  # "production" or "development"

    model_config = SettingsConfigDict(
        env_prefix="SUBUNIT_",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )


settings = Settings()
