"""Monte Carlo layer: many weather scenarios on one grid, scenario k seeded by (master, k)."""

from __future__ import annotations

import logging
from dataclasses import dataclass

from .grid import Network, TimeSeries
from .metrics import EconParams, KpiReport, compute_kpis
from .parallel import parallel_map
from .twin import DigitalTwin, SimulationResult, scenario_seed
from .weather import WeatherConfig

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class _Job:
    twin: DigitalTwin
    weather: WeatherConfig
    econ: EconParams
    seed: int
    span: tuple[int, int] | None
    portfolio_cost: float
    n_investments: int
    days_to_complete: int


@dataclass(frozen=True)
class ScenarioOutcome:
    report: KpiReport
    invalid: bool
    convergence_failures: int


def run_one(job: _Job, k: int) -> SimulationResult:
    return job.twin.run_scenario(job.weather, scenario_seed(job.seed, k), job.span)


def _scenario(job: _Job, k: int) -> ScenarioOutcome:
    res = run_one(job, k)
    rep = compute_kpis(res, job.twin.network, job.econ, job.portfolio_cost, job.n_investments,
                       job.days_to_complete)
    return ScenarioOutcome(rep, res.invalid, res.convergence_failures)


@dataclass
class MonteCarloRun:
    job: _Job
    outcomes: list[ScenarioOutcome]

    @property
    def reports(self) -> list[KpiReport]:
        """Reports of the valid scenarios."""
        return [o.report for o in self.outcomes if not o.invalid]

    @property
    def invalid(self) -> int:
        return sum(o.invalid for o in self.outcomes)

    def scenario(self, k: int) -> SimulationResult:
        """Re-simulate scenario ``k`` in full (for dumps)."""
        return run_one(self.job, k)


def run_monte_carlo(network: Network, timeseries: TimeSeries, weather: WeatherConfig, econ: EconParams,
                    n_scenarios: int, seed: int, span: tuple[int, int] | None = None, *,
                    portfolio_cost: float = 0.0, n_investments: int = 0, days_to_complete: int = 0,
                    jobs: int | None = 1) -> MonteCarloRun:
    twin = DigitalTwin(network, timeseries)
    twin.warm(span)
    job = _Job(twin, weather, econ, int(seed), span, float(portfolio_cost), int(n_investments),
               int(days_to_complete))
    outcomes = parallel_map(_scenario, job, list(range(n_scenarios)), jobs)
    run = MonteCarloRun(job, outcomes)
    if run.invalid:
        log.warning("%d of %d scenarios invalid (too many non-convergent steps)", run.invalid, n_scenarios)
    return run
