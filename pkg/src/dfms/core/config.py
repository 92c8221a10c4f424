"""
Configuration module for dfms.
Loads environment variables and provides process-level settings.

Run-level knobs (everything an attack needs) live in ``dfms.attack.config``;
this module only covers where things go and how the process behaves.
"""

from pathlib import Path
from typing import Literal

import torch
from pydantic import field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """
    Process settings loaded from ``DFMS_*`` environment variables or a ``.env`` file.
    """
    model_config = SettingsConfigDict(
        env_prefix="DFMS_",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )

    # Output locations
    OUTPUT_ROOT: Path = Path("runs")
    DATA_ROOT: Path = Path("data")

    # Runtime
    LOG_LEVEL: str = "INFO"
    DEVICE: Literal["cpu", "cuda", "auto"] = "auto"
    NUM_WORKERS: int = 1

    # Victim server
    SERVER_HOST: str = "127.0.0.1"
    SERVER_PORT: int = 8000

    @field_validator("LOG_LEVEL", mode="before")
    @classmethod
    def normalize_log_level(cls, v: str) -> str:
        return str(v).upper()

    @field_validator("NUM_WORKERS")
    @classmethod
    def check_workers(cls, v: int) -> int:
        if v < 1:
            raise ValueError("NUM_WORKERS must be >= 1")
        return v

    def torch_device(self) -> torch.device:
        """Resolve DEVICE to a concrete torch device."""
        if self.DEVICE == "auto":
            return torch.device("cuda" if torch.cuda.is_available() else "cpu")
        return torch.device(self.DEVICE)


# Create a global settings instance
settings = Settings()
