"""Crew scheduling that minimises weighted completion time, and leave-one-out project weights.

The integer model has y[i, t] (project i worked on day t), completion days
C[i] and technician assignments x[i, j, t]. Technicians are interchangeable
and every active project uses a fixed crew, so the search runs over the
aggregated y and technician ids are handed out afterwards.

Search is exact branch-and-bound, one day per level. With pre-emption
allowed (the default) a day only ever needs to consider maximal crew-feasible
sets of unfinished projects: moving one unit of later work of a project into
a day with spare crew never delays any completion. The cost still to come
depends only on the remaining work, which gives a dominance memo. The lower
bound is the larger of (a) every project needing its remaining days and
(b) the weighted completion time of a single machine with the crew's daily
capacity, ordered by Smith's rule.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .grid import Network, TimeSeries, apply_investments
from .investments import InfeasibleError, Investment, Portfolio, Schedule
from .metrics import EconParams
from .parallel import parallel_map
from .twin import DigitalTwin, scenario_seed
from .weather import WeatherConfig

MAX_PROJECTS = 12
MAX_HORIZON_DAYS = 120
NODE_LIMIT = 200_000


class ScheduleTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class ScheduleModel:
    project_ids: tuple[int, ...]
    durations: tuple[int, ...]
    technicians: tuple[int, ...]
    pool: int
    weights: tuple[float, ...]

    def __post_init__(self):
        n = len(self.project_ids)
        if not (len(self.durations) == len(self.technicians) == len(self.weights) == n):
            raise ValueError("project arrays must have equal length")
        if any(d < 1 for d in self.durations):
            raise ValueError("durations must be >= 1 day")
        if any(w < 0 for w in self.weights):
            raise ValueError("weights must be >= 0")
        for pid, c in zip(self.project_ids, self.technicians):
            if c > self.pool:
                raise InfeasibleError(f"project {pid} needs {c} technicians, pool is {self.pool}")

    @property
    def horizon(self) -> int:
        """Days needed to run every project back to back."""
        return int(sum(self.durations))

    @classmethod
    def from_investments(cls, investments: Sequence[Investment], pool: int,
                         weights: Sequence[float]) -> "ScheduleModel":
        return cls(tuple(p.id for p in investments), tuple(p.work_days for p in investments),
                   tuple(p.technicians for p in investments), int(pool), tuple(float(w) for w in weights))


def _feasible_subsets(cands: Sequence[int], tech: Sequence[int], pool: int, base_used: int,
                      forced: tuple[int, ...], maximal: bool) -> list[tuple[int, ...]]:
    out = []
    n = len(cands)
    for r in range(n, -1, -1):
        for combo in itertools.combinations(cands, r):
            used = base_used + sum(tech[i] for i in combo)
            if used > pool:
                continue
            chosen = forced + combo
            if not chosen:
                continue
            if maximal and any(i not in combo and used + tech[i] <= pool for i in cands):
                continue
            out.append(chosen)
    return out


class _Search:
    def __init__(self, model: ScheduleModel, contiguous: bool, node_limit: int):
        self.w = np.asarray(model.weights, dtype=float)
        self.d = model.durations
        self.c = model.technicians
        self.pool = model.pool
        self.n = len(self.d)
        self.contiguous = contiguous
        self.node_limit = node_limit
        self.nodes = 0
        self.best = math.inf
        self.best_days: list[tuple[int, ...]] | None = None
        self.learned: dict = {}
        self.exhausted = True
        self._subsets: dict = {}

    def bound(self, rem: tuple[int, ...]) -> float:
        idx = [i for i in range(self.n) if rem[i] > 0]
        if not idx:
            return 0.0
        w, c, P = self.w, self.c, self.pool
        # every project still needs its remaining days
        b_days = sum(w[i] * rem[i] for i in idx)
        # mean-busy-time bound: one machine of rate P technician-days per day,
        # each project running at its crew size at most
        work = {i: rem[i] * c[i] for i in idx}
        t = 0.0
        b_crew = 0.0
        for i in sorted(idx, key=lambda i: work[i] / w[i] if w[i] > 0 else math.inf):
            t += work[i] / P
            b_crew += w[i] * (t - work[i] / (2 * P) + rem[i] / 2)
        # same bound on m parallel machines, m = most projects that fit at once
        crews = sorted(c[i] for i in idx)
        m, used = 0, 0
        for ci in crews:
            if used + ci > P:
                break
            used += ci
            m += 1
        t = 0.0
        b_mach = 0.0
        for i in sorted(idx, key=lambda i: rem[i] / w[i] if w[i] > 0 else math.inf):
            t += rem[i] / m
            b_mach += w[i] * (t - rem[i] / (2 * m) + rem[i] / 2)
        return max(b_days, b_crew, b_mach)

    def children(self, rem: tuple[int, ...], running: frozenset[int]) -> list[tuple[int, ...]]:
        if not self.contiguous:
            open_ = tuple(i for i in range(self.n) if rem[i] > 0)
            key = (open_, ())
        else:
            forced = tuple(sorted(running))
            fresh = tuple(i for i in range(self.n) if rem[i] == self.d[i] and i not in running)
            key = (fresh, forced)
        hit = self._subsets.get(key)
        if hit is None:
            if not self.contiguous:
                hit = _feasible_subsets(open_, self.c, self.pool, 0, (), maximal=True)
            else:
                used = sum(self.c[i] for i in forced)
                hit = _feasible_subsets(fresh, self.c, self.pool, used, forced, maximal=False)
            self._subsets[key] = hit
        return hit

    def greedy(self) -> None:
        """Incumbent from list scheduling: highest weight per remaining technician-day first."""
        rem = list(self.d)
        running: set[int] = set()
        g = 0.0
        days = []
        while any(rem):
            g += float(sum(self.w[i] for i in range(self.n) if rem[i] > 0))
            used = sum(self.c[i] for i in running)
            chosen = sorted(running)
            order = sorted((i for i in range(self.n) if rem[i] > 0 and i not in running),
                           key=lambda i: (-self.w[i] / (self.c[i] * rem[i]), i))
            for i in order:
                if self.contiguous and rem[i] != self.d[i]:
                    continue
                if used + self.c[i] <= self.pool:
                    chosen.append(i)
                    used += self.c[i]
            for i in chosen:
                rem[i] -= 1
            running = {i for i in chosen if rem[i] > 0} if self.contiguous else set()
            days.append(tuple(sorted(chosen)))
        self.best = g
        self.best_days = days

    def run(self) -> None:
        self.greedy()
        self._dfs(tuple(self.d), frozenset(), 0.0, [])

    def _dfs(self, rem, running, g, days) -> None:
        if self.nodes >= self.node_limit:
            self.exhausted = False
            return
        self.nodes += 1
        if not any(rem):
            if g < self.best:
                self.best = g
                self.best_days = list(days)
            return
        key = (rem, running) if self.contiguous else rem
        # learned lower bound on the cost still to come from this state
        h = max(self.bound(rem), self.learned.get(key, 0.0))
        if g + h >= self.best:
            return
        step = float(sum(self.w[i] for i in range(self.n) if rem[i] > 0))
        scored = []
        for subset in self.children(rem, running):
            nrem = list(rem)
            for i in subset:
                nrem[i] -= 1
            nrem = tuple(nrem)
            nrun = frozenset(i for i in subset if nrem[i] > 0) if self.contiguous else frozenset()
            nkey = (nrem, nrun) if self.contiguous else nrem
            scored.append((max(self.bound(nrem), self.learned.get(nkey, 0.0)), subset, nrem, nrun))
        scored.sort(key=lambda s: (s[0], s[1]))
        for b, subset, nrem, nrun in scored:
            if g + step + b >= self.best:
                break
            days.append(subset)
            self._dfs(nrem, nrun, g + step, days)
            days.pop()
        # every completion through here costs at least the incumbent
        self.learned[key] = max(self.learned.get(key, 0.0), self.best - g)


def solve_schedule(model: ScheduleModel, *, contiguous: bool = False, node_limit: int = NODE_LIMIT) -> Schedule:
    """Exact minimum of sum w[i] * C[i] under duration and crew constraints.

    Days are 1-indexed. ``optimal`` is False only when the node limit stopped
    the search before the gap closed; the best schedule found is returned.
    """
    n = len(model.project_ids)
    if n > MAX_PROJECTS:
        raise ScheduleTooLarge(f"{n} projects exceed the exact-solver limit of {MAX_PROJECTS}; "
                               "split the portfolio or use the FIFO scheduler")
    if model.horizon > MAX_HORIZON_DAYS:
        raise ScheduleTooLarge(f"horizon of {model.horizon} days exceeds {MAX_HORIZON_DAYS}; "
                               "use the FIFO scheduler for portfolios of this size")
    if n == 0:
        return Schedule((), (), (), model.pool, (), objective=0.0, optimal=True, weights=())
    search = _Search(model, contiguous, node_limit)
    search.run()
    if search.best_days is None:
        raise InfeasibleError("no schedule found within the node limit")
    days = tuple(tuple(model.project_ids[i] for i in subset) for subset in search.best_days)
    return Schedule(model.project_ids, model.durations, model.technicians, model.pool, days,
                    objective=search.best, optimal=search.exhausted, weights=model.weights)


# ---------------------------------------------------------------------------
# Marginal benefits
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _BenefitJob:
    network: Network
    timeseries: TimeSeries
    weather: WeatherConfig
    mc_runs: int
    seed: int
    span: tuple[int, int] | None


def _variant_means(job: _BenefitJob, selected: tuple[Investment, ...]) -> tuple[np.ndarray, np.ndarray]:
    twin = DigitalTwin(apply_investments(job.network, selected), job.timeseries)
    unserved = np.empty(job.mc_runs)
    losses = np.empty(job.mc_runs)
    for r in range(job.mc_runs):
        res = twin.run_scenario(job.weather, scenario_seed(job.seed, r), job.span)
        unserved[r] = res.total_unserved_mwh
        losses[r] = res.total_losses_mwh
    return unserved, losses


def marginal_benefits(portfolio: Portfolio | Sequence[Investment], network: Network, timeseries: TimeSeries,
                      weather: WeatherConfig, econ: EconParams, mc_runs: int, seed: int,
                      span: tuple[int, int] | None = None, jobs: int | None = 1) -> list[float]:
    """Leave-one-out value of each project in $, clamped at zero.

    Every variant uses the same scenario seeds, so the differences are paired.
    """
    projects = tuple(portfolio.investments if isinstance(portfolio, Portfolio) else portfolio)
    if not projects:
        raise ValueError("marginal benefits need a non-empty portfolio")
    job = _BenefitJob(network, timeseries, weather, int(mc_runs), int(seed), span)
    variants = [projects] + [projects[:k] + projects[k + 1:] for k in range(len(projects))]
    results = parallel_map(_variant_means, job, variants, jobs)
    full_u, full_l = results[0]
    weights = []
    for u, l in results[1:]:
        value = econ.value_of_lost_load * 1000.0 * (u - full_u) + econ.cost_per_kwh * 1000.0 * (l - full_l)
        weights.append(max(0.0, float(value.mean())))
    return weights
