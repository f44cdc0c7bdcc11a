"""Run configuration: one JSON document, validated with field-path error messages."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Literal, Optional

import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .metrics import EconParams
from .nsga2 import GaConfig
from .weather import DAY_PARTS, SEASONS, WeatherConfig


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field path."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class PathsSection(_Strict):
    network: str
    catalog: str
    timeseries: str
    output: Optional[str] = None


class SimulationSection(_Strict):
    start: str
    end: str
    scenarios: int = Field(30, ge=2)
    confidence: float = Field(0.95, gt=0, lt=1)

    @field_validator("start", "end")
    @classmethod
    def _date(cls, v: str) -> str:
        try:
            pd.Timestamp(v)
        except ValueError as exc:
            raise ValueError(f"not a date: {v!r}") from exc
        return v

    @model_validator(mode="after")
    def _order(self):
        if pd.Timestamp(self.end) < pd.Timestamp(self.start):
            raise ValueError("end precedes start")
        return self


class EconomicsSection(_Strict):
    cost_per_kwh: float = Field(ge=0)
    value_of_lost_load: float = Field(ge=0)
    discount_rate: float = Field(0.08, ge=0)
    npv_horizon_years: int = Field(5, ge=1)
    om_fraction: float = Field(0.10, ge=0, le=1)
    asset_lifetime_years: float = Field(40.0, gt=0)


class PlanningSection(_Strict):
    budget: float = Field(ge=0)
    horizon_days: int = Field(ge=1)
    technicians: int = Field(ge=1)
    candidate_filter: Literal["all", "source_adjacent"] = "all"
    exclude_lines: list[int] = []
    outage_date: str = "2016-07-01"
    outage_hours: float = Field(24.0, gt=0)


class WeatherSection(_Strict):
    base_rate_per_hour: float = Field(ge=0, le=1)
    seasonal: dict[str, float]
    hourly: dict[str, float]
    radius_range_km: tuple[float, float]
    duration_range_hours: tuple[float, float]
    outage_probability: dict[str, float]
    repair_days_per_km: dict[str, float]

    @field_validator("seasonal")
    @classmethod
    def _seasons(cls, v):
        return _keys(v, SEASONS)

    @field_validator("hourly")
    @classmethod
    def _parts(cls, v):
        return _keys(v, DAY_PARTS)

    @field_validator("outage_probability", "repair_days_per_km")
    @classmethod
    def _kinds(cls, v):
        return _keys(v, ("overhead", "underground"))


def _keys(v: dict, keys) -> dict:
    if set(v) != set(keys):
        raise ValueError(f"expected keys {list(keys)}, got {sorted(v)}")
    return v


class Nsga2Section(_Strict):
    population: int = Field(ge=2)
    generations: int = Field(ge=0)
    mc_runs: int = Field(ge=1)
    crossover_prob: float = Field(0.9, ge=0, le=1)
    mutation_prob: Optional[float] = Field(None, ge=0, le=1)


class ScheduleSection(_Strict):
    contiguous: bool = False
    marginal_mc_runs: Optional[int] = Field(None, ge=1)


class RunConfigModel(_Strict):
    name: str = "run"
    seed: int = Field(0, ge=0, lt=2 ** 64)
    paths: PathsSection
    simulation: SimulationSection
    economics: EconomicsSection
    planning: PlanningSection
    weather: WeatherSection
    nsga2: Nsga2Section
    schedule: ScheduleSection = ScheduleSection()


@dataclass(frozen=True)
class RunConfig:
    """Validated configuration with paths resolved against the config file's directory."""

    model: RunConfigModel
    base_dir: Path

    @property
    def name(self) -> str:
        return self.model.name

    @property
    def seed(self) -> int:
        return self.model.seed

    def path(self, key: str) -> Path:
        p = Path(getattr(self.model.paths, key))
        return p if p.is_absolute() else (self.base_dir / p)

    @property
    def network_file(self) -> Path:
        return self.path("network")

    @property
    def catalog_file(self) -> Path:
        return self.path("catalog")

    @property
    def timeseries_file(self) -> Path:
        return self.path("timeseries")

    @property
    def output_dir(self) -> Path | None:
        return self.path("output") if self.model.paths.output else None

    @property
    def econ(self) -> EconParams:
        return EconParams(**self.model.economics.model_dump())

    @property
    def weather(self) -> WeatherConfig:
        w = self.model.weather
        return WeatherConfig(
            base_rate_per_hour=w.base_rate_per_hour,
            seasonal=dict(w.seasonal),
            hourly=dict(w.hourly),
            radius_range=tuple(w.radius_range_km),
            duration_range=tuple(w.duration_range_hours),
            outage_probability=dict(w.outage_probability),
            repair_days_per_km=dict(w.repair_days_per_km),
        )

    def ga(self, seed: int | None = None) -> GaConfig:
        g = self.model.nsga2
        return GaConfig(population=g.population, generations=g.generations, mc_runs=g.mc_runs,
                        crossover_prob=g.crossover_prob, mutation_prob=g.mutation_prob,
                        seed=self.seed if seed is None else seed)

    def with_seed(self, seed: int | None) -> "RunConfig":
        if seed is None:
            return self
        return RunConfig(self.model.model_copy(update={"seed": int(seed)}), self.base_dir)

    def to_dict(self, absolute_paths: bool = True) -> dict[str, Any]:
        data = self.model.model_dump(mode="json")
        if absolute_paths:
            for key in ("network", "catalog", "timeseries"):
                data["paths"][key] = str(self.path(key).resolve())
            data["paths"]["output"] = None
        return data

    def sha256(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()


def _format_errors(exc: ValidationError, source: str) -> str:
    parts = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        parts.append(f"{loc}: {err['msg']}")
    return f"{source}: " + "; ".join(parts)


def parse_config(data: Any, base_dir: str | Path = ".", source: str = "config", check_files: bool = True) -> RunConfig:
    try:
        model = RunConfigModel.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_format_errors(exc, source)) from None
    try:
        WeatherConfig(
            base_rate_per_hour=model.weather.base_rate_per_hour, seasonal=model.weather.seasonal,
            hourly=model.weather.hourly, radius_range=tuple(model.weather.radius_range_km),
            duration_range=tuple(model.weather.duration_range_hours),
            outage_probability=model.weather.outage_probability,
            repair_days_per_km=model.weather.repair_days_per_km)
    except ValueError as exc:
        raise ConfigError(f"{source}: weather: {exc}") from None
    cfg = RunConfig(model, Path(base_dir))
    if check_files:
        for key in ("network", "catalog", "timeseries"):
            if not cfg.path(key).exists():
                raise ConfigError(f"{source}: paths.{key}: file not found: {cfg.path(key)}")
    return cfg


def load_config(path: str | Path, check_files: bool = True) -> RunConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return parse_config(data, path.parent, str(path), check_files)
