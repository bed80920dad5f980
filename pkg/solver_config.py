"""
Solver settings.

Tolerances, caps and rounding defaults are read from ``config/solver.yaml``
(or the file named by ``PDLS_CONFIG``) and validated with pydantic.
"""

import os
from pathlib import Path
from typing import Any, Dict, Optional

import yaml
from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field

DEFAULT_CONFIG_PATH = Path(__file__).parent / "config" / "solver.yaml"


class LpSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    feasibility_tolerance: float = Field(1e-7, gt=0)
    reduced_cost_tolerance: float = Field(1e-9, gt=0)
    pivot_tolerance: float = Field(1e-9, gt=0)
    max_pivots: int = Field(1_000_000, ge=1)


class SeparationSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    violation_tolerance: float = Field(1e-6, gt=0)
    extra_iterations: int = Field(10, ge=0)


class ExactSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    dp_state_cap: int = Field(100_000_000, ge=1)
    brute_force_cap: int = Field(10_000_000, ge=1)
    td_spider_max_vertices: int = Field(9, ge=1)


class RoundingSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    gamma: float = Field(4.0, gt=0)
    max_samples: int = Field(100, ge=1)
    seed: int = Field(0, ge=0, lt=2**64)
    exact_shortcut: bool = True
    alpha_grid: int = Field(1000, ge=1)


class LiftSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    tolerance: float = Field(1e-7, gt=0)


class SolverSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    lp: LpSettings = Field(default_factory=LpSettings)
    separation: SeparationSettings = Field(default_factory=SeparationSettings)
    exact: ExactSettings = Field(default_factory=ExactSettings)
    rounding: RoundingSettings = Field(default_factory=RoundingSettings)
    lift: LiftSettings = Field(default_factory=LiftSettings)

    def with_overrides(self, **sections: Dict[str, Any]) -> "SolverSettings":
        """Copy with some section fields replaced, e.g. ``rounding={"gamma": 2}``"""
        data = self.model_dump()
        for section, values in sections.items():
            data[section].update({k: v for k, v in values.items() if v is not None})
        return SolverSettings.model_validate(data)


def load_settings(config_path: Optional[str] = None) -> SolverSettings:
    """Load settings from YAML; an explicit path that does not exist is an error"""
    load_dotenv()
    path = config_path or os.getenv("PDLS_CONFIG")
    config_file = Path(path) if path else DEFAULT_CONFIG_PATH
    if not config_file.exists():
        if path:
            raise FileNotFoundError(f"Configuration file not found: {config_file}")
        return SolverSettings()

    with open(config_file, "r", encoding="utf-8") as f:
        raw = yaml.safe_load(f) or {}
    return SolverSettings.model_validate(raw)


# Global settings instance
_global_settings: Optional[SolverSettings] = None


def get_settings(config_path: Optional[str] = None) -> SolverSettings:
    """Get or create the global settings instance"""
    global _global_settings
    if _global_settings is None:
        _global_settings = load_settings(config_path)
    return _global_settings


def set_settings(settings: SolverSettings) -> None:
    global _global_settings
    _global_settings = settings


def reset_settings() -> None:
    global _global_settings
    _global_settings = None
