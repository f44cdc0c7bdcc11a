"""KPIs per scenario, Monte Carlo aggregation and subnet de-averaging."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import stats

from .grid import Network
from .twin import SimulationResult

HOURS_PER_YEAR = 8760.0
OVER_CAPACITY_LOADING = 0.8
VOLTAGE_BAND_PU = 0.05
Z_SWITCH = 30  # t-quantile below this many samples, normal quantile at or above


@dataclass(frozen=True)
class EconParams:
    cost_per_kwh: float
    value_of_lost_load: float
    discount_rate: float = 0.08
    npv_horizon_years: int = 5
    om_fraction: float = 0.10
    asset_lifetime_years: float = 40.0

    def __post_init__(self):
        if self.discount_rate < 0:
            raise ValueError("discount rate must be >= 0")
        if self.npv_horizon_years < 1:
            raise ValueError("NPV horizon must be >= 1 year")
        if not 0.0 <= self.om_fraction <= 1.0:
            raise ValueError("O&M fraction must lie in [0, 1]")
        if self.cost_per_kwh < 0 or self.value_of_lost_load < 0:
            raise ValueError("energy prices must be >= 0")
        if self.asset_lifetime_years <= 0:
            raise ValueError("asset lifetime must be > 0")


@dataclass(frozen=True)
class KpiSpec:
    key: str
    label: str
    unit: str
    varying: bool


# Report rows: four weather-varying KPIs, then eight fixed ones.
KPI_ROWS: tuple[KpiSpec, ...] = (
    KpiSpec("cost_unserved", "Cost of total unserved energy", "$", True),
    KpiSpec("saidi_med", "SAIDI-MED", "min", True),
    KpiSpec("saifi_med", "SAIFI-MED", "count", True),
    KpiSpec("caidi_med", "CAIDI-MED", "min", True),
    KpiSpec("portfolio_cost", "Total investment portfolio cost", "$", False),
    KpiSpec("n_investments", "Total number of investments", "count", False),
    KpiSpec("days_to_complete", "Total days to complete work", "days", False),
    KpiSpec("cost_resistive_losses", "Cost of total resistive losses", "$", False),
    KpiSpec("plant_value_growth", "Growth in plant value", "$", False),
    KpiSpec("avg_capacity_headroom", "Average capacity headroom", "%", False),
    KpiSpec("pct_time_over_capacity", "Duration above capacity limit", "%", False),
    KpiSpec("pct_time_voltage_deviation", "Duration of voltage deviation", "%", False),
)
KPI_KEYS = tuple(s.key for s in KPI_ROWS)


@dataclass(frozen=True)
class KpiReport:
    cost_unserved: float
    saidi_med: float | None
    saifi_med: float | None
    caidi_med: float | None
    portfolio_cost: float
    n_investments: int
    days_to_complete: int
    cost_resistive_losses: float
    plant_value_growth: float
    avg_capacity_headroom: float
    pct_time_over_capacity: float
    pct_time_voltage_deviation: float
    energy_unserved_mwh: float = 0.0
    energy_losses_mwh: float = 0.0
    cost_unserved_by_subnet: Mapping[str, float] = field(default_factory=dict)

    def value(self, key: str) -> float | None:
        return getattr(self, key)

    def to_dict(self) -> dict:
        return asdict(self)


def _nan_pct(mask: np.ndarray, valid: np.ndarray) -> float:
    n = int(valid.sum())
    return 100.0 * float((mask & valid).sum()) / n if n else 0.0


def asset_base(network: Network) -> float:
    """Replacement value of all lines in $ (length times per-km asset value)."""
    return float(sum(ln.length * ln.conductor.asset_value_per_km for ln in network.lines))


def compute_kpis(result: SimulationResult, network: Network, econ: EconParams, portfolio_cost: float = 0.0,
                 n_investments: int = 0, days_to_complete: int = 0) -> KpiReport:
    """KPIs of one scenario; ``network`` is the grid the scenario ran on (after investments)."""
    unserved_kwh = result.unserved_mwh * 1000.0
    cost_unserved = float(unserved_kwh.sum()) * econ.value_of_lost_load

    n_customers = len(result.load_ids)
    if n_customers:
        minutes = sum(ep.minutes for ep in result.episodes)
        saidi = minutes / n_customers
        saifi = len(result.episodes) / n_customers
        caidi = saidi / saifi if saifi > 0 else None
    else:
        saidi = saifi = caidi = None

    losses_kwh = result.total_losses_mwh * 1000.0
    span_years = result.hours / HOURS_PER_YEAR
    depreciation = asset_base(network) / econ.asset_lifetime_years * span_years

    loading = result.line_loading
    live_lines = ~np.isnan(loading)
    if live_lines.any():
        headroom = float(np.mean((1.0 - loading[live_lines]) * 100.0))
    else:
        headroom = 0.0
    over = _nan_pct(np.nan_to_num(loading, nan=0.0) > OVER_CAPACITY_LOADING, live_lines)
    vm = result.bus_vm
    live_buses = ~np.isnan(vm)
    deviation = _nan_pct(np.abs(np.nan_to_num(vm, nan=1.0) - 1.0) > VOLTAGE_BAND_PU, live_buses)

    by_subnet = dict.fromkeys(network.subnets, 0.0)
    load_subnet = [network.bus(ld.bus).subnet for ld in network.loads]
    per_load = unserved_kwh.sum(axis=0) * econ.value_of_lost_load
    for sub, cost in zip(load_subnet, per_load):
        by_subnet[sub] += float(cost)

    return KpiReport(
        cost_unserved=cost_unserved,
        saidi_med=saidi,
        saifi_med=saifi,
        caidi_med=caidi,
        portfolio_cost=float(portfolio_cost),
        n_investments=int(n_investments),
        days_to_complete=int(days_to_complete),
        cost_resistive_losses=losses_kwh * econ.cost_per_kwh,
        plant_value_growth=float(portfolio_cost) - depreciation,
        avg_capacity_headroom=headroom,
        pct_time_over_capacity=over,
        pct_time_voltage_deviation=deviation,
        energy_unserved_mwh=result.total_unserved_mwh,
        energy_losses_mwh=result.total_losses_mwh,
        cost_unserved_by_subnet=by_subnet,
    )


@dataclass(frozen=True)
class Stat:
    median: float
    iqr: float
    mean: float
    ci_low: float
    ci_high: float
    n: int

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class SummaryStats:
    stats: Mapping[str, Stat]
    n_scenarios: int
    confidence: float

    def __getitem__(self, key: str) -> Stat:
        return self.stats[key]


def critical_value(n: int, confidence: float = 0.95) -> float:
    """Two-sided quantile: Student t with n-1 dof below 30 samples, else normal."""
    p = 0.5 + confidence / 2.0
    if n < Z_SWITCH:
        return float(stats.t.ppf(p, n - 1))
    return float(stats.norm.ppf(p))


def summarize(values: Iterable[float], confidence: float = 0.95) -> Stat:
    x = np.asarray([v for v in values if v is not None and not math.isnan(v)], dtype=float)
    n = x.size
    if n == 0:
        return Stat(math.nan, math.nan, math.nan, math.nan, math.nan, 0)
    q25, med, q75 = np.percentile(x, [25, 50, 75])
    mean = float(x.mean())
    if n < 2:
        return Stat(float(med), float(q75 - q25), mean, math.nan, math.nan, 1)
    half = critical_value(n, confidence) * float(x.std(ddof=1)) / math.sqrt(n)
    return Stat(float(med), float(q75 - q25), mean, mean - half, mean + half, n)


def aggregate(reports: Sequence[KpiReport], confidence: float = 0.95) -> SummaryStats:
    """Median, IQR, mean and confidence interval of every KPI over scenarios.

    KPIs that are undefined in some scenarios (CAIDI without interruptions)
    are summarised over the scenarios where they are defined.
    """
    if len(reports) < 2:
        raise ValueError("aggregation needs at least 2 scenario reports")
    out = {key: summarize((r.value(key) for r in reports), confidence) for key in KPI_KEYS}
    out["energy_unserved_mwh"] = summarize((r.energy_unserved_mwh for r in reports), confidence)
    out["energy_losses_mwh"] = summarize((r.energy_losses_mwh for r in reports), confidence)
    return SummaryStats(out, len(reports), confidence)


def deaverage_by_subnet(reports: Sequence[KpiReport], network: Network,
                        confidence: float = 0.95) -> dict[str, Stat]:
    """Per-subnet statistics of the unserved-energy cost."""
    if len(reports) < 2:
        raise ValueError("aggregation needs at least 2 scenario reports")
    return {sub: summarize((r.cost_unserved_by_subnet.get(sub, 0.0) for r in reports), confidence)
            for sub in network.subnets}

