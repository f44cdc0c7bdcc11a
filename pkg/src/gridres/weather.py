"""Stochastic thunderstorm model: occurrence, footprint, line outages, repairs.

Occurrence is Poisson per time step with rate
``base_rate_per_hour * seasonal[season] * hourly[day_part] * interval_hours``;
a step whose draw is positive starts exactly one event. The footprint is a
disc with uniformly sampled centre (inside the grid's bounding box), radius
and duration. Lines whose segment touches the disc fail independently with a
per-type probability and stay out until the event ends plus their repair time.

Buckets: Dec-Feb winter, Mar-May spring, Jun-Aug summer, Sep-Nov fall;
night 00-06, morning 06-12, afternoon 12-18, evening 18-24.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

import numpy as np
import pandas as pd

from .grid import STEP_HOURS, Line, Network

SEASONS = ("winter", "spring", "summer", "fall")
DAY_PARTS = ("night", "morning", "afternoon", "evening")

# month (1..12) -> season index
_MONTH_SEASON = np.array([-1, 0, 0, 1, 1, 1, 2, 2, 2, 3, 3, 3, 0])


def season_of(month: int | np.ndarray):
    return _MONTH_SEASON[np.asarray(month)]


def day_part_of(hour: int | np.ndarray):
    return np.asarray(hour) // 6


@dataclass(frozen=True)
class WeatherConfig:
    base_rate_per_hour: float
    seasonal: Mapping[str, float] = field(default_factory=lambda: dict.fromkeys(SEASONS, 1.0))
    hourly: Mapping[str, float] = field(default_factory=lambda: dict.fromkeys(DAY_PARTS, 1.0))
    radius_range: tuple[float, float] = (0.5, 3.0)  # km, [low, high)
    duration_range: tuple[float, float] = (2.0, 8.0)  # hours, [low, high)
    outage_probability: Mapping[str, float] = field(
        default_factory=lambda: {"overhead": 0.4, "underground": 0.05})
    repair_days_per_km: Mapping[str, float] = field(
        default_factory=lambda: {"overhead": 0.5, "underground": 5.0})

    def __post_init__(self):
        if not 0.0 <= self.base_rate_per_hour <= 1.0:
            raise ValueError("base_rate_per_hour must lie in [0, 1]")
        for name, table, keys in (("seasonal", self.seasonal, SEASONS), ("hourly", self.hourly, DAY_PARTS)):
            missing = set(keys) - set(table)
            if missing:
                raise ValueError(f"{name} multipliers missing {sorted(missing)}")
            if any(table[k] <= 0 for k in keys):
                raise ValueError(f"{name} multipliers must be > 0")
        lo, hi = self.radius_range
        if not 0 <= lo < hi:
            raise ValueError("radius range must satisfy 0 <= r_min < r_max")
        lo, hi = self.duration_range
        if not 0 <= lo < hi:
            raise ValueError("duration range must satisfy 0 <= d_min < d_max")
        for kind in ("overhead", "underground"):
            p = self.outage_probability[kind]
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"outage probability for {kind} must lie in [0, 1]")
            if self.repair_days_per_km[kind] < 0:
                raise ValueError(f"repair days for {kind} must be >= 0")

    @classmethod
    def disabled(cls) -> "WeatherConfig":
        return cls(base_rate_per_hour=0.0)

    @property
    def seasonal_array(self) -> np.ndarray:
        return np.array([self.seasonal[s] for s in SEASONS])

    @property
    def hourly_array(self) -> np.ndarray:
        return np.array([self.hourly[d] for d in DAY_PARTS])


@dataclass(frozen=True)
class LineOutage:
    line_id: int
    restored: pd.Timestamp


@dataclass(frozen=True)
class WeatherEvent:
    center: tuple[float, float]
    radius: float
    start: pd.Timestamp
    duration: float  # hours
    outages: tuple[LineOutage, ...] = ()
    id: int = 0

    @property
    def end(self) -> pd.Timestamp:
        return self.start + pd.Timedelta(hours=self.duration)


def event_rates(months, hours, config: WeatherConfig, interval_hours: float = STEP_HOURS) -> np.ndarray:
    """Vectorised Poisson rate for arrays of month (1..12) and hour (0..23)."""
    seasonal = config.seasonal_array[season_of(months)]
    hourly = config.hourly_array[day_part_of(hours)]
    return config.base_rate_per_hour * seasonal * hourly * interval_hours


def event_rate(timestamp: Any, config: WeatherConfig, interval_hours: float = STEP_HOURS) -> float:
    ts = pd.Timestamp(timestamp)
    return float(event_rates(ts.month, ts.hour, config, interval_hours))


def event_count(rng: np.random.Generator, timestamp: Any, config: WeatherConfig,
                interval_hours: float = STEP_HOURS) -> int:
    """Raw Poisson draw for one interval; callers start one event when it is positive."""
    return int(rng.poisson(event_rate(timestamp, config, interval_hours)))


def sample_event(rng: np.random.Generator, config: WeatherConfig,
                 bounds: tuple[float, float, float, float], timestamp: Any, event_id: int = 0) -> WeatherEvent:
    x_min, x_max, y_min, y_max = bounds
    cx = rng.uniform(x_min, x_max)
    cy = rng.uniform(y_min, y_max)
    radius = rng.uniform(*config.radius_range)
    duration = rng.uniform(*config.duration_range)
    return WeatherEvent(center=(float(cx), float(cy)), radius=float(radius),
                        start=pd.Timestamp(timestamp), duration=float(duration), id=event_id)


def segment_distances(segments: np.ndarray, point: tuple[float, float]) -> np.ndarray:
    """Minimum Euclidean distance from ``point`` to each (x0, y0, x1, y1) segment."""
    a = segments[:, :2]
    d = segments[:, 2:] - a
    p = np.asarray(point, dtype=float)
    len2 = np.einsum("ij,ij->i", d, d)
    with np.errstate(invalid="ignore", divide="ignore"):
        t = np.where(len2 > 0, np.einsum("ij,ij->i", p - a, d) / len2, 0.0)
    t = np.clip(t, 0.0, 1.0)
    closest = a + t[:, None] * d
    # endpoints checked exactly; a + 1.0 * (b - a) need not round to b
    ends = np.minimum(np.hypot(*(a - p).T), np.hypot(*(segments[:, 2:] - p).T))
    return np.minimum(np.hypot(*(closest - p).T), ends)


def lines_in_impact_area(network: Network, event: WeatherEvent) -> set[int]:
    if not network.lines:
        return set()
    dist = segment_distances(network.line_segments, event.center)
    return {network.lines[k].id for k in np.flatnonzero(dist <= event.radius)}


def repair_time(line: Line, config: WeatherConfig) -> float:
    """Hours to repair ``line`` once the event is over."""
    kind = "overhead" if line.overhead else "underground"
    return line.length * config.repair_days_per_km[kind] * 24.0


def sample_line_outages(rng: np.random.Generator, candidates: Sequence[Line], config: WeatherConfig,
                        event: WeatherEvent, unavailable: Iterable[int] = ()) -> list[LineOutage]:
    """Independent failure draw for every candidate line in the footprint.

    One uniform is consumed per candidate, in line-id order, whether or not the
    line is ``unavailable`` (already out); this keeps random streams aligned
    between networks that differ only in line types.
    """
    skip = set(unavailable)
    ordered = sorted(candidates, key=lambda ln: ln.id)
    u = rng.random(len(ordered))
    out = []
    for ln, draw in zip(ordered, u):
        if ln.id in skip or not ln.in_service:
            continue
        p = config.outage_probability["overhead" if ln.overhead else "underground"]
        if draw < p:
            restored = event.end + pd.Timedelta(hours=repair_time(ln, config))
            out.append(LineOutage(line_id=ln.id, restored=restored))
    return out
