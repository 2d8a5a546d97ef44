"""Runtime knobs read from the environment (SELRAND_*)."""

from __future__ import annotations

import logging

from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class RuntimeSettings(BaseSettings):
    model_config = SettingsConfigDict(env_prefix="SELRAND_", extra="ignore")

    threads: int = Field(default=1, ge=1)
    log_level: str = "INFO"
    config: str | None = None

    @field_validator("log_level")
    @classmethod
    def known_level(cls, v: str) -> str:
        level = v.upper()
        if not isinstance(logging.getLevelName(level), int):
            raise ValueError(f"Unknown log level: {v}")
        return level

    @property
    def level(self) -> int:
        return logging.getLevelName(self.log_level)
