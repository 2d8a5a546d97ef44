"""YAML study config loader with Pydantic validation."""

from __future__ import annotations

import math
import os
import re
from pathlib import Path
from typing import Any, Literal

import yaml
from pydantic import BaseModel, Field, field_validator, model_validator

from selrand.errors import UsageError
from selrand.inference.confidence import parse_grid
from selrand.inference.pvalues import ExactMethod, RejectionMethod, RwmMethod, Sampler
from selrand.samplers.exact import DEFAULT_CAP
from selrand.samplers.rejection import DEFAULT_CHUNK
from selrand.samplers.rwm import RwmConfig


def _resolve_env_vars(value: str) -> str:
    """Replace ${VAR_NAME} with environment variable values."""
    pattern = re.compile(r"\$\{(\w+)\}")

    def replacer(match: re.Match) -> str:
        var_name = match.group(1)
        env_val = os.environ.get(var_name)
        if env_val is None:
            raise ValueError(f"Environment variable {var_name} is not set")
        return env_val

    return pattern.sub(replacer, value)


def _resolve_env_recursive(data: Any) -> Any:
    """Walk a nested dict/list and resolve env vars in string values."""
    if isinstance(data, str):
        return _resolve_env_vars(data)
    if isinstance(data, dict):
        return {k: _resolve_env_recursive(v) for k, v in data.items()}
    if isinstance(data, list):
        return [_resolve_env_recursive(item) for item in data]
    return data


def _grid(v: Any) -> tuple[float, float, float]:
    if isinstance(v, str):
        try:
            return parse_grid(v)
        except UsageError as exc:
            raise ValueError(exc.message) from exc
    if isinstance(v, (list, tuple)) and len(v) == 3:
        lo, hi, step = (float(x) for x in v)
        if lo < hi and step > 0:
            return lo, hi, step
    raise ValueError(f"Invalid grid: {v}. Expected 'lo:hi:step' or [lo, hi, step].")


SamplerKind = Literal["exact", "rejection", "rwm"]


class SamplerSettings(BaseModel):
    kind: SamplerKind = "rejection"
    num_samples: int = Field(default=1000, ge=1)
    window: int = Field(default=5, ge=1)
    burn_in: int | None = Field(default=None, ge=0)
    max_attempts: int | None = Field(default=None, ge=1)
    chunk_size: int = Field(default=DEFAULT_CHUNK, ge=1)
    exact_cap: int = Field(default=DEFAULT_CAP, ge=1)

    def rwm_config(self, window: int | None = None) -> RwmConfig:
        """Chain long enough to keep ``num_samples`` states after burn-in."""
        burn = self.burn_in if self.burn_in is not None else math.ceil(self.num_samples / 10)
        return RwmConfig(
            num_samples=self.num_samples + burn,
            window=window or self.window,
            burn_in=burn,
        )

    def build(self, kind: SamplerKind | None = None, *, threads: int = 1) -> Sampler:
        kind = kind or self.kind
        if kind == "exact":
            return ExactMethod(cap=self.exact_cap)
        if kind == "rwm":
            return RwmMethod(self.rwm_config())
        return RejectionMethod(
            num_samples=self.num_samples,
            max_attempts=self.max_attempts,
            chunk_size=self.chunk_size,
            threads=threads,
        )


class EnrichmentDesign(BaseModel):
    n1: int = Field(default=100, ge=4)
    n2: int = Field(default=40, ge=2)
    quantiles: tuple[float, float] = (0.2, 0.8)
    holdout: bool = True
    tau_true: dict[str, float] = Field(default_factory=lambda: {"low": 0.0, "high": 0.0})

    @field_validator("n1", "n2")
    @classmethod
    def even(cls, v: int) -> int:
        if v % 2:
            raise ValueError(f"stage size must be even, got {v}")
        return v


class HoldoutDesign(BaseModel):
    n1: int = Field(default=8, ge=4)
    n2: int = Field(default=8, ge=2)
    tau_true: dict[str, float] = Field(default_factory=lambda: {"low": 0.0, "high": 1.0})
    grid: tuple[float, float, float] = (-2.0, 3.0, 0.1)
    datasets: int = Field(default=10, ge=1)
    target: str = "only_high"

    @field_validator("grid", mode="before")
    @classmethod
    def parse_grid_field(cls, v: Any) -> tuple[float, float, float]:
        return _grid(v)


class RealDataDesign(BaseModel):
    dataset: str | None = None  # CSV with unit_id, group, treatment, outcome
    n1: int = Field(default=2000, ge=1)
    n2: int = Field(default=200, ge=1)
    target_group: str = ">=80"
    p: float = Field(default=0.5, gt=0.0, lt=1.0)
    max_draw_factor: int = Field(default=20, ge=1)


class CoverageDesign(BaseModel):
    bracket: tuple[float, float] = (-3.0, 3.0)
    tol: float = Field(default=0.05, gt=0.0)

    @model_validator(mode="after")
    def ordered(self) -> CoverageDesign:
        if not self.bracket[0] < self.bracket[1]:
            raise ValueError(f"bracket must be increasing, got {self.bracket}")
        return self


class StudyConfig(BaseModel):
    replications: int = Field(default=400, ge=1)
    seed: int = Field(default=0, ge=0)
    threads: int = Field(default=1, ge=1)
    alpha: float = Field(default=0.1, gt=0.0, lt=1.0)
    tau_grid: tuple[float, float, float] = (-1.0, 1.0, 0.2)
    methods: list[str] = Field(
        default_factory=lambda: ["naive", "split", "srt_rejection", "srt_rwm"]
    )
    windows: list[int] = Field(default_factory=lambda: [2, 5, 10, 15])
    timing_enabled: bool = False
    sampler: SamplerSettings = Field(default_factory=SamplerSettings)
    enrichment: EnrichmentDesign = Field(default_factory=EnrichmentDesign)
    holdout: HoldoutDesign = Field(default_factory=HoldoutDesign)
    real_data: RealDataDesign = Field(default_factory=RealDataDesign)
    coverage: CoverageDesign = Field(default_factory=CoverageDesign)

    @field_validator("tau_grid", mode="before")
    @classmethod
    def parse_tau_grid(cls, v: Any) -> tuple[float, float, float]:
        return _grid(v)

    @field_validator("methods")
    @classmethod
    def known_methods(cls, v: list[str]) -> list[str]:
        known = {"naive", "split", "srt_rejection", "srt_rwm", "srt_exact"}
        unknown = [m for m in v if m not in known]
        if unknown or not v:
            raise ValueError(f"Unknown or empty methods {unknown}; expected from {sorted(known)}")
        return v

    @field_validator("windows")
    @classmethod
    def positive_windows(cls, v: list[int]) -> list[int]:
        if not v or any(h < 1 for h in v):
            raise ValueError(f"Window sizes must be positive and nonempty, got {v}")
        return v


def load_config(config_path: str | Path | None = None) -> StudyConfig:
    """Load and validate config from YAML file.

    Resolution order:
    1. Explicit path argument
    2. SELRAND_CONFIG env var
    3. config/local.yaml (gitignored, machine-specific overrides)
    4. config/default.yaml (checked in)
    """
    if config_path is None:
        env_path = os.environ.get("SELRAND_CONFIG")
        if env_path:
            config_path = Path(env_path)
        else:
            project_root = Path(__file__).parent.parent.parent
            local = project_root / "config" / "local.yaml"
            default = project_root / "config" / "default.yaml"
            config_path = local if local.exists() else default

    config_path = Path(config_path)
    if not config_path.exists():
        raise FileNotFoundError(f"Config file not found: {config_path}")

    with open(config_path, encoding="utf-8") as f:
        raw = yaml.safe_load(f) or {}

    resolved = _resolve_env_recursive(raw)
    return StudyConfig(**resolved)
