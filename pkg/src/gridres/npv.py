"""Model-free planning: per-investment NPV, greedy ranking and FIFO crew scheduling."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

from .grid import STEP_HOURS, Network, TimeSeries, apply_investments
from .investments import BURY, InfeasibleError, Investment, Portfolio, Schedule
from .metrics import HOURS_PER_YEAR, EconParams
from .parallel import parallel_map
from .twin import DigitalTwin, ForcedOutage
from .weather import WeatherConfig

EXCLUSION_RATIO = 1.1


def discount_factors(rate: float, horizon_years: int) -> np.ndarray:
    """(1 + r)^-t for t = 0..T inclusive."""
    return (1.0 + rate) ** -np.arange(horizon_years + 1, dtype=float)


def compute_npv(benefit: float, om_cost: float, capex: float, rate: float, horizon_years: int) -> float:
    """Sum over t = 0..T of (B - C) / (1 + r)^t, minus the capital cost spent at t = 0."""
    return float((benefit - om_cost) * discount_factors(rate, horizon_years).sum() - capex)


def is_excluded(npv: float, benefit: float) -> bool:
    """Default exclusion: negative NPV that also exceeds 1.1 times the annual benefit.

    A non-positive benefit makes the ratio unbounded, so any negative NPV is excluded then.
    """
    if npv >= 0:
        return False
    if benefit <= 0:
        return True
    return abs(npv) / benefit > EXCLUSION_RATIO


@dataclass(frozen=True)
class NpvAssessment:
    investment_id: int
    line_id: int
    kind: str
    capex: float
    benefit: float  # $/yr
    om_cost: float  # $/yr
    npv: float
    unserved_benefit: float = 0.0
    loss_benefit: float = 0.0
    included: bool = False
    reason: str = ""

    @property
    def excluded_by_rule(self) -> bool:
        return is_excluded(self.npv, self.benefit)


@dataclass(frozen=True)
class OutageAssumption:
    """The single forced outage each bury candidate is credited with avoiding per year."""

    date: pd.Timestamp
    hours: float = 24.0


class NpvStudy:
    """Shared baseline simulations for assessing many candidates on one grid."""

    def __init__(self, network: Network, timeseries: TimeSeries, econ: EconParams, outage: OutageAssumption):
        self.network = network
        self.timeseries = timeseries
        self.econ = econ
        self.outage = outage
        self._weatherless = WeatherConfig.disabled()
        start = timeseries.step_of(outage.date)
        stop = min(timeseries.n_steps, start + int(np.ceil(outage.hours / STEP_HOURS - 1e-9)))
        self.outage_span = (start, stop)
        self.base = DigitalTwin(network, timeseries)
        self.base_losses_mwh = self.base.run_scenario(self._weatherless, 0).total_losses_mwh
        self.annualize = HOURS_PER_YEAR / (timeseries.n_steps * STEP_HOURS)

    def _forced(self, line_id: int) -> list[ForcedOutage]:
        return [ForcedOutage(line_id, self.outage.date, self.outage.hours)]

    def assess(self, inv: Investment) -> NpvAssessment:
        econ = self.econ
        upgraded = apply_investments(self.network, [inv])
        twin = DigitalTwin(upgraded, self.timeseries)
        losses = twin.run_scenario(self._weatherless, 0).total_losses_mwh
        loss_benefit = (self.base_losses_mwh - losses) * 1000.0 * econ.cost_per_kwh * self.annualize
        unserved_benefit = 0.0
        if inv.kind == BURY:
            before = self.base.run_scenario(self._weatherless, 0, self.outage_span, self._forced(inv.line_id))
            after = twin.run_scenario(self._weatherless, 0, self.outage_span)
            unserved_benefit = (before.total_unserved_mwh - after.total_unserved_mwh) * 1000.0 \
                * econ.value_of_lost_load
        benefit = unserved_benefit + loss_benefit
        om = econ.om_fraction * inv.cost
        npv = compute_npv(benefit, om, inv.cost, econ.discount_rate, econ.npv_horizon_years)
        return NpvAssessment(inv.id, inv.line_id, inv.kind, inv.cost, benefit, om, npv,
                             unserved_benefit, loss_benefit)


def _assess_one(study: NpvStudy, inv: Investment) -> NpvAssessment:
    return study.assess(inv)


def assess_npv(investment: Investment, network: Network, timeseries: TimeSeries, econ: EconParams,
               outage: OutageAssumption) -> NpvAssessment:
    return NpvStudy(network, timeseries, econ, outage).assess(investment)


def assess_all(investments: Sequence[Investment], network: Network, timeseries: TimeSeries, econ: EconParams,
               outage: OutageAssumption, jobs: int | None = 1) -> list[NpvAssessment]:
    study = NpvStudy(network, timeseries, econ, outage)
    return parallel_map(_assess_one, study, list(investments), jobs)


def ranking(assessments: Iterable[NpvAssessment]) -> list[NpvAssessment]:
    """NPV descending, ties to the lower investment id."""
    return sorted(assessments, key=lambda a: (-a.npv, a.investment_id))


def rank_and_select(assessments: Sequence[NpvAssessment], investments: Sequence[Investment],
                    budget: float) -> Portfolio:
    """Walk the ranking, keeping every non-excluded item that still fits the budget.

    Unaffordable items are skipped and the scan continues. The portfolio keeps
    ranking order, which is the FIFO queue order.
    """
    by_id = {inv.id: inv for inv in investments}
    chosen: list[Investment] = []
    spent = 0.0
    for a in ranking(assessments):
        if a.excluded_by_rule:
            continue
        inv = by_id[a.investment_id]
        if spent + inv.cost <= budget:
            chosen.append(inv)
            spent += inv.cost
    return Portfolio(tuple(chosen), method="npv")


def mark_selection(assessments: Sequence[NpvAssessment], portfolio: Portfolio) -> list[NpvAssessment]:
    """Fill ``included`` and ``reason`` from the selected portfolio, in ranking order."""
    chosen = set(portfolio.ids)
    out = []
    for a in ranking(assessments):
        if a.investment_id in chosen:
            out.append(dataclasses.replace(a, included=True, reason=""))
        elif a.excluded_by_rule:
            out.append(dataclasses.replace(a, included=False, reason="negative NPV beyond 1.1x benefit"))
        else:
            out.append(dataclasses.replace(a, included=False, reason="over budget"))
    return out


def assessments_frame(assessments: Sequence[NpvAssessment]) -> pd.DataFrame:
    return pd.DataFrame(
        [(a.investment_id, a.line_id, a.kind, a.capex, a.unserved_benefit, a.loss_benefit, a.benefit,
          a.om_cost, a.npv, a.included, a.reason) for a in assessments],
        columns=["id", "line_id", "kind", "capex", "B_unserved", "B_losses", "B_t", "C_t", "npv",
                 "included", "reason"])


def fifo_schedule(projects: Sequence[Investment] | Portfolio, pool: int) -> Schedule:
    """Start projects in queue order as soon as crew allows; no project overtakes its predecessor."""
    projects = tuple(projects.investments if isinstance(projects, Portfolio) else projects)
    for p in projects:
        if p.technicians > pool:
            raise InfeasibleError(f"project {p.id} ({p.label}) needs {p.technicians} technicians, pool is {pool}")
    remaining = [p.work_days for p in projects]
    running: list[int] = []
    nxt = 0
    days: list[tuple[int, ...]] = []
    while nxt < len(projects) or running:
        used = sum(projects[k].technicians for k in running)
        while nxt < len(projects) and used + projects[nxt].technicians <= pool:
            running.append(nxt)
            used += projects[nxt].technicians
            nxt += 1
        days.append(tuple(projects[k].id for k in running))
        for k in running:
            remaining[k] -= 1
        running = [k for k in running if remaining[k] > 0]
    return Schedule(
        project_ids=tuple(p.id for p in projects),
        durations=tuple(p.work_days for p in projects),
        technicians=tuple(p.technicians for p in projects),
        pool=pool,
        days=tuple(days),
    )
