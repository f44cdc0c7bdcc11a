"""Two-objective NSGA-II over binary portfolio genomes.

Objectives are mean unserved energy and mean resistive losses (MWh, both
minimised). Budget and timeline overshoot enter as a penalty handled by
constraint domination: a feasible genome beats an infeasible one, and among
infeasible genomes the smaller penalty wins.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .grid import Network, TimeSeries, apply_investments
from .investments import CandidateSet, InfeasibleError, Portfolio
from .npv import fifo_schedule
from .parallel import parallel_map
from .twin import DigitalTwin, scenario_seed
from .weather import WeatherConfig

Genome = tuple[int, ...]
MAX_DUPLICATE_ROUNDS = 100


@dataclass(frozen=True)
class GaConfig:
    population: int = 20
    generations: int = 30
    mc_runs: int = 3
    crossover_prob: float = 0.9
    mutation_prob: float | None = None  # None: 1 / genome length
    seed: int = 0

    def __post_init__(self):
        if self.population < 2:
            raise ValueError("population must be >= 2")
        if self.generations < 0:
            raise ValueError("generations must be >= 0")
        if self.mc_runs < 1:
            raise ValueError("Monte Carlo runs per candidate must be >= 1")
        if not 0.0 <= self.crossover_prob <= 1.0:
            raise ValueError("crossover probability must lie in [0, 1]")
        if self.mutation_prob is not None and not 0.0 <= self.mutation_prob <= 1.0:
            raise ValueError("mutation probability must lie in [0, 1]")


@dataclass(frozen=True)
class Evaluation:
    genome: Genome
    objectives: tuple[float, float]
    penalty: float
    cost: float = 0.0
    days: int | None = None

    @property
    def feasible(self) -> bool:
        return self.penalty == 0.0


def genome_key(genome: Iterable[int]) -> int:
    """Stable 64-bit hash of a genome, used to derive its scenario seeds."""
    bits = bytes(int(b) & 1 for b in genome)
    return int.from_bytes(hashlib.sha256(bits).digest()[:8], "little")


def penalty_for(candidates: CandidateSet, genome: Sequence[int]) -> tuple[float, float, int | None]:
    """(penalty, cost, FIFO days) for a genome; crew-infeasible portfolios add 1.0."""
    chosen = candidates.selected(genome)
    cost = float(sum(inv.cost for inv in chosen))
    penalty = max(0.0, cost - candidates.budget) / max(candidates.budget, 1.0)
    try:
        days = fifo_schedule(chosen, candidates.technicians).makespan
        penalty += max(0, days - candidates.horizon_days) / max(candidates.horizon_days, 1)
    except InfeasibleError:
        days = None
        penalty += 1.0
    return penalty, cost, days


# ---------------------------------------------------------------------------
# Evaluators
# ---------------------------------------------------------------------------

class CachedEvaluator:
    """Genome -> Evaluation with a cache; repeated genomes cost nothing."""

    def __init__(self):
        self.cache: dict[Genome, Evaluation] = {}
        self.computed = 0

    def _compute(self, genomes: list[Genome]) -> list[Evaluation]:
        raise NotImplementedError

    def __call__(self, genomes: Sequence[Sequence[int]]) -> list[Evaluation]:
        keys = [tuple(int(b) for b in g) for g in genomes]
        missing = list(dict.fromkeys(k for k in keys if k not in self.cache))
        if missing:
            for k, ev in zip(missing, self._compute(missing)):
                self.cache[k] = ev
            self.computed += len(missing)
        return [self.cache[k] for k in keys]


class FunctionEvaluator(CachedEvaluator):
    """Wraps ``fn(genome) -> (objectives, penalty, cost)``."""

    def __init__(self, fn: Callable[[Genome], tuple[tuple[float, float], float, float]]):
        super().__init__()
        self.fn = fn

    def _compute(self, genomes):
        out = []
        for g in genomes:
            objs, pen, cost = self.fn(g)
            out.append(Evaluation(g, (float(objs[0]), float(objs[1])), float(pen), float(cost)))
        return out


@dataclass(frozen=True)
class _TwinJob:
    candidates: CandidateSet
    network: Network
    timeseries: TimeSeries
    weather: WeatherConfig
    mc_runs: int
    seed: int
    span: tuple[int, int] | None


def _simulate_genome(job: _TwinJob, genome: Genome) -> tuple[float, float]:
    net = apply_investments(job.network, job.candidates.selected(genome))
    twin = DigitalTwin(net, job.timeseries)
    key = genome_key(genome)
    unserved, losses = [], []
    for r in range(job.mc_runs):
        res = twin.run_scenario(job.weather, scenario_seed(job.seed, key, r), job.span)
        unserved.append(res.total_unserved_mwh)
        losses.append(res.total_losses_mwh)
    return float(np.mean(unserved)), float(np.mean(losses))


def evaluate_genome(genome: Sequence[int], candidates: CandidateSet, network: Network, timeseries: TimeSeries,
                    weather: WeatherConfig, mc_runs: int, seed: int,
                    span: tuple[int, int] | None = None) -> Evaluation:
    """Uncached evaluation of one genome (always simulates)."""
    g = tuple(int(b) for b in genome)
    pen, cost, days = penalty_for(candidates, g)
    job = _TwinJob(candidates, network, timeseries, weather, int(mc_runs), int(seed), span)
    return Evaluation(g, _simulate_genome(job, g), pen, cost, days)


class TwinEvaluator(CachedEvaluator):
    """Monte Carlo evaluation on the digital twin.

    Run ``r`` of genome ``g`` uses the seed stream (master, hash(g), r), so a
    genome's result does not depend on when, where or whether it was cached.
    Genomes that break the budget, timeline or crew limits are not simulated:
    constraint domination never looks at their objectives, which are NaN.
    """

    def __init__(self, candidates: CandidateSet, network: Network, timeseries: TimeSeries,
                 weather: WeatherConfig, mc_runs: int, seed: int, span: tuple[int, int] | None = None,
                 jobs: int | None = 1):
        super().__init__()
        self.job = _TwinJob(candidates, network, timeseries, weather, int(mc_runs), int(seed), span)
        self.jobs = jobs
        self.simulations = 0

    def _compute(self, genomes):
        pens = [penalty_for(self.job.candidates, g) for g in genomes]
        todo = [g for g, p in zip(genomes, pens) if p[0] == 0.0]
        sims = dict(zip(todo, parallel_map(_simulate_genome, self.job, todo, self.jobs)))
        self.simulations += len(todo) * self.job.mc_runs
        out = []
        for g, (pen, cost, days) in zip(genomes, pens):
            objs = sims.get(g, (math.nan, math.nan))
            out.append(Evaluation(g, objs, pen, cost, days))
        return out


# ---------------------------------------------------------------------------
# Sorting, crowding, hypervolume
# ---------------------------------------------------------------------------

def dominates(a: Evaluation, b: Evaluation) -> bool:
    """Constraint domination."""
    if a.feasible != b.feasible:
        return a.feasible
    if not a.feasible:
        return a.penalty < b.penalty
    (a1, a2), (b1, b2) = a.objectives, b.objectives
    return a1 <= b1 and a2 <= b2 and (a1 < b1 or a2 < b2)


def non_dominated_sort(evals: Sequence[Evaluation]) -> list[list[int]]:
    """Fronts of indices, best first (fast non-dominated sort)."""
    n = len(evals)
    dominated_by: list[list[int]] = [[] for _ in range(n)]
    count = [0] * n
    for i in range(n):
        for j in range(i + 1, n):
            if dominates(evals[i], evals[j]):
                dominated_by[i].append(j)
                count[j] += 1
            elif dominates(evals[j], evals[i]):
                dominated_by[j].append(i)
                count[i] += 1
    fronts = []
    current = [i for i in range(n) if count[i] == 0]
    while current:
        fronts.append(current)
        nxt = []
        for i in current:
            for j in dominated_by[i]:
                count[j] -= 1
                if count[j] == 0:
                    nxt.append(j)
        current = sorted(nxt)
    return fronts


def crowding_distance(points: np.ndarray) -> np.ndarray:
    """Crowding distance of each row of an (n, m) objective array; boundaries are infinite."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    n, m = pts.shape
    dist = np.zeros(n)
    if n <= 2:
        dist[:] = np.inf
        return dist
    for k in range(m):
        order = np.argsort(pts[:, k], kind="stable")
        col = pts[order, k]
        dist[order[0]] = dist[order[-1]] = np.inf
        span = col[-1] - col[0]
        if span <= 0:
            continue
        dist[order[1:-1]] += (col[2:] - col[:-2]) / span
    return dist


def _front_crowding(evals: Sequence[Evaluation], front: Sequence[int]) -> np.ndarray:
    if evals[front[0]].feasible:
        pts = np.array([evals[i].objectives for i in front])
    else:
        pts = np.array([[evals[i].penalty] for i in front])
    return crowding_distance(pts)


def hypervolume_2d(points: np.ndarray, reference: Sequence[float]) -> float:
    """Area dominated by ``points`` (minimisation) and bounded by ``reference``."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    r1, r2 = reference
    pts = pts[(pts[:, 0] < r1) & (pts[:, 1] < r2)]
    if pts.size == 0:
        return 0.0
    pts = pts[np.lexsort((pts[:, 1], pts[:, 0]))]
    area = 0.0
    best2 = r2
    for f1, f2 in pts:
        if f2 < best2:
            area += (r1 - f1) * (best2 - f2)
            best2 = f2
    return float(area)


def pareto_front(evals: Sequence[Evaluation]) -> list[Evaluation]:
    """Feasible, mutually non-dominated evaluations with duplicates removed, sorted by objective 1."""
    feas = list({e.genome: e for e in evals if e.feasible}.values())
    keep = [e for e in feas if not any(dominates(o, e) for o in feas)]
    return sorted(keep, key=lambda e: (e.objectives, e.genome))


def select_compromise(front: Sequence[Evaluation]) -> Evaluation:
    """Minimum sum of min-max normalised objectives; ties go to the cheaper portfolio."""
    feas = [e for e in front if e.feasible]
    if not feas:
        raise ValueError("no feasible portfolio on the front")
    objs = np.array([e.objectives for e in feas], dtype=float)
    lo, hi = objs.min(axis=0), objs.max(axis=0)
    rng = np.where(hi > lo, hi - lo, 1.0)
    score = ((objs - lo) / rng).sum(axis=1)
    k = min(range(len(feas)), key=lambda i: (round(float(score[i]), 12), feas[i].cost, feas[i].genome))
    return feas[k]


# ---------------------------------------------------------------------------
# Main loop
# ---------------------------------------------------------------------------

@dataclass
class GenerationStats:
    generation: int
    new_evaluations: int
    feasible: int
    front_size: int
    archive_size: int
    archive_hypervolume: float = math.nan


@dataclass
class NsgaResult:
    archive: list[Evaluation]
    population: list[Evaluation]
    history: list[GenerationStats]
    populations: list[list[Evaluation]] = field(default_factory=list)
    reference: tuple[float, float] = (math.nan, math.nan)


def _survive(evals: list[Evaluation], size: int) -> tuple[list[Evaluation], list[int], list[float]]:
    fronts = non_dominated_sort(evals)
    chosen: list[int] = []
    rank: dict[int, int] = {}
    crowd: dict[int, float] = {}
    for r, front in enumerate(fronts):
        cd = _front_crowding(evals, front)
        for i, d in zip(front, cd):
            rank[i], crowd[i] = r, float(d)
        if len(chosen) + len(front) <= size:
            chosen.extend(front)
        else:
            order = sorted(range(len(front)), key=lambda k: (-cd[k], front[k]))
            chosen.extend(front[k] for k in order[: size - len(chosen)])
        if len(chosen) == size:
            break
    survivors = [evals[i] for i in chosen]
    # rank and crowding recomputed on the survivors for mating selection
    fronts = non_dominated_sort(survivors)
    ranks = [0] * len(survivors)
    crowds = [0.0] * len(survivors)
    for r, front in enumerate(fronts):
        for i, d in zip(front, _front_crowding(survivors, front)):
            ranks[i], crowds[i] = r, float(d)
    return survivors, ranks, crowds


def run(config: GaConfig, n_bits: int, evaluate: Callable[[list[Genome]], list[Evaluation]],
        initial: Sequence[Sequence[int]] = ()) -> NsgaResult:
    """Evolve ``config.generations`` offspring generations of size ``config.population``.

    ``evaluate`` maps a list of genomes to evaluations (usually a cached
    evaluator). ``initial`` genomes seed the first population, the rest is
    uniform random without duplicates.
    """
    rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(n_bits,)))
    mu = config.population
    pm = config.mutation_prob if config.mutation_prob is not None else 1.0 / max(n_bits, 1)

    pop_genomes: list[Genome] = []
    for g in initial:
        g = tuple(int(b) for b in g)
        if len(g) != n_bits:
            raise ValueError("initial genome has the wrong length")
        if g not in pop_genomes and len(pop_genomes) < mu:
            pop_genomes.append(g)
    seen = set(pop_genomes)
    attempts = 0
    while len(pop_genomes) < mu:
        g = tuple(int(b) for b in rng.integers(0, 2, n_bits))
        attempts += 1
        if g in seen and attempts < MAX_DUPLICATE_ROUNDS * mu and len(seen) < 2 ** n_bits:
            continue
        seen.add(g)
        pop_genomes.append(g)

    everything: dict[Genome, Evaluation] = {}

    def _eval(genomes):
        out = evaluate(list(genomes))
        fresh = 0
        for e in out:
            if e.genome not in everything:
                everything[e.genome] = e
                fresh += 1
        return out, fresh

    pop, fresh = _eval(pop_genomes)
    pop, ranks, crowds = _survive(pop, mu)
    history = [_stats(0, fresh, pop, everything)]
    populations = [list(pop)]

    def tournament() -> int:
        a, b = rng.integers(0, len(pop), 2)
        ka = (ranks[a], -crowds[a])
        kb = (ranks[b], -crowds[b])
        return int(a) if ka <= kb else int(b)

    for gen in range(1, config.generations + 1):
        existing = {e.genome for e in pop}
        offspring: list[Genome] = []
        rounds = 0
        while len(offspring) < mu:
            p1 = np.array(pop[tournament()].genome, dtype=np.int8)
            p2 = np.array(pop[tournament()].genome, dtype=np.int8)
            c1, c2 = p1.copy(), p2.copy()
            if n_bits > 1 and rng.random() < config.crossover_prob:
                cut = int(rng.integers(1, n_bits))
                c1[cut:], c2[cut:] = p2[cut:], p1[cut:]
            for child in (c1, c2):
                flips = rng.random(n_bits) < pm
                child[flips] ^= 1
                g = tuple(int(b) for b in child)
                rounds += 1
                if (g in existing or g in offspring) and rounds < MAX_DUPLICATE_ROUNDS * mu:
                    continue
                if len(offspring) < mu:
                    offspring.append(g)
        off, fresh = _eval(offspring)
        pop, ranks, crowds = _survive(pop + off, mu)
        history.append(_stats(gen, fresh, pop, everything))
        populations.append(list(pop))

    archive = pareto_front(everything.values())
    result = NsgaResult(archive, pop, history, populations)
    feas = [e.objectives for e in everything.values() if e.feasible]
    if feas:
        arr = np.array(feas)
        ref = tuple(float(v) for v in arr.max(axis=0) * 1.1 + 1e-12)
        result.reference = ref
        order = list(everything.values())
        # replay the archive growth generation by generation
        counts = np.cumsum([h.new_evaluations for h in history])
        for h, upto in zip(history, counts):
            front = pareto_front(order[:upto])
            h.archive_hypervolume = hypervolume_2d(np.array([e.objectives for e in front]), ref) if front else 0.0
    return result


def _stats(gen: int, fresh: int, pop: list[Evaluation], everything: dict) -> GenerationStats:
    feas = [e for e in pop if e.feasible]
    front = pareto_front(feas)
    return GenerationStats(gen, fresh, len(feas), len(front), len(pareto_front(everything.values())))


def optimize(config: GaConfig, candidates: CandidateSet, evaluator: CachedEvaluator) -> tuple[NsgaResult, Portfolio]:
    """Run NSGA-II and turn the compromise genome into a portfolio (empty if nothing is feasible)."""
    result = run(config, len(candidates), evaluator, initial=[(0,) * len(candidates)])
    if not result.archive:
        return result, Portfolio((), method="nsga2")
    best = select_compromise(result.archive)
    objectives = {"unserved_mwh": best.objectives[0], "losses_mwh": best.objectives[1]}
    return result, Portfolio(candidates.selected(best.genome), method="nsga2", objectives=objectives)
