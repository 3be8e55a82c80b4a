from __future__ import annotations
from pydantic_settings import BaseSettings, SettingsConfigDict
from pydantic import Field
from typing import Optional
from dotenv import load_dotenv
load_dotenv()  # populates os.environ from .env


class Settings(BaseSettings):
    """Process-level settings; every field reads RPO_<NAME> from the environment."""

    # Artifacts
    output_dir: str = Field("runs", description="default directory for `run` outputs")
    data_dir: str = Field("data", description="where the run journal lives")
    journal_file: str = Field("run_log.jsonl")

    # Logging
    log_level: str = Field("INFO")
    log_json: bool = Field(False)

    # Fan-out for sweeps and Monte Carlo batches
    workers: int = Field(1, ge=1)

    # Tracing is off unless an OTLP/HTTP endpoint is given
    otel_endpoint: Optional[str] = Field(None)

    model_config = SettingsConfigDict(
        env_prefix="RPO_",
        env_file=".env",
        env_file_encoding="utf-8",
        # Ignore any unrelated env vars
        extra="ignore",
    )
