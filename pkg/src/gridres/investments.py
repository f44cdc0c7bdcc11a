"""Candidate investments, portfolios and crew schedules."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np
import pandas as pd

from .grid import ConductorType, Line, Network

BURY = "bury"
UPGRADE = "upgrade"
LARGE_GENERATOR_MW = 1.0


@dataclass(frozen=True)
class Investment:
    id: int
    kind: str  # "bury" or "upgrade"
    line_id: int
    conductor: ConductorType
    cost: float  # $
    work_days: int
    technicians: int

    @property
    def label(self) -> str:
        return f"{self.kind} line {self.line_id}"

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id, "kind": self.kind, "line_id": self.line_id, "conductor": self.conductor.name,
            "cost": self.cost, "work_days": self.work_days, "technicians": self.technicians,
        }


@dataclass(frozen=True)
class CandidateSet:
    investments: tuple[Investment, ...]
    budget: float
    horizon_days: int
    technicians: int

    def __post_init__(self):
        if [inv.id for inv in self.investments] != list(range(len(self.investments))):
            raise ValueError("candidate ids must be dense 0..N-1 in order")

    def __len__(self) -> int:
        return len(self.investments)

    def __getitem__(self, k: int) -> Investment:
        return self.investments[k]

    def selected(self, genome: Sequence[int] | np.ndarray) -> tuple[Investment, ...]:
        bits = np.asarray(genome, dtype=bool)
        if bits.shape != (len(self),):
            raise ValueError(f"genome length {bits.size} does not match {len(self)} candidates")
        return tuple(inv for inv, b in zip(self.investments, bits) if b)

    def cost(self, genome) -> float:
        return float(sum(inv.cost for inv in self.selected(genome)))

    def genome_of(self, ids: Iterable[int]) -> np.ndarray:
        g = np.zeros(len(self), dtype=np.int8)
        g[list(ids)] = 1
        return g

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([inv.to_dict() for inv in self.investments],
                            columns=["id", "kind", "line_id", "conductor", "cost", "work_days", "technicians"])

    def write_csv(self, path: str | Path) -> None:
        self.to_frame().to_csv(path, index=False)


def _bury_target(line: Line, catalog: Sequence[ConductorType]) -> ConductorType | None:
    options = [c for c in catalog if not c.overhead and c.underground_cost_per_km > 0
               and c.max_current >= line.conductor.max_current]
    return min(options, key=lambda c: (c.max_current, c.name)) if options else None


def _upgrade_target(line: Line, catalog: Sequence[ConductorType]) -> ConductorType | None:
    options = [c for c in catalog if not c.overhead and c.upgrade_cost_per_km > 0
               and c.max_current > line.conductor.max_current]
    return min(options, key=lambda c: (c.max_current, c.name)) if options else None


def source_adjacent_lines(network: Network, min_generator_mw: float = LARGE_GENERATOR_MW) -> set[int]:
    """Lines touching the external-grid busbars or a bus with a generator of at least ``min_generator_mw``.

    Busbars fed from the external grid through transformers count as external-grid buses.
    """
    source = {network.slack_bus}
    grew = True
    while grew:
        grew = False
        for tr in network.transformers:
            for a, b in ((tr.hv_bus, tr.lv_bus), (tr.lv_bus, tr.hv_bus)):
                if a in source and b not in source:
                    source.add(b)
                    grew = True
    source |= {g.bus for g in network.generators if not g.is_slack_connection and g.rated_mw >= min_generator_mw}
    return {ln.id for ln in network.lines if ln.from_bus in source or ln.to_bus in source}


def enumerate_candidates(network: Network, catalog: Sequence[ConductorType] | None = None, *,
                         source_filter: bool = False, budget: float = math.inf, horizon_days: int = 365,
                         technicians: int = 1, exclude_lines: Iterable[int] = ()) -> CandidateSet:
    """One bury candidate per overhead line, one upgrade per underground line with a larger conductor.

    Costs, work days (rounded up) and crew size come from the target
    conductor's install resources. ``source_filter`` keeps only lines next to
    the external grid or to large generators.
    """
    catalog = tuple(catalog) if catalog is not None else network.catalog
    keep = source_adjacent_lines(network) if source_filter else None
    skip = set(exclude_lines)
    out: list[Investment] = []
    for ln in sorted(network.lines, key=lambda ln: ln.id):
        if not ln.in_service or ln.id in skip or (keep is not None and ln.id not in keep):
            continue
        if ln.overhead:
            target = _bury_target(ln, catalog)
            if target is None:
                continue
            kind, cost_km, days_km, crew = BURY, target.underground_cost_per_km, \
                target.underground_days_per_km, target.underground_technicians
        else:
            target = _upgrade_target(ln, catalog)
            if target is None:
                continue
            kind, cost_km, days_km, crew = UPGRADE, target.upgrade_cost_per_km, \
                target.upgrade_days_per_km, target.upgrade_technicians
        days = max(1, math.ceil(round(days_km * ln.length, 9)))
        out.append(Investment(len(out), kind, ln.id, target, cost_km * ln.length, days, int(crew)))
    return CandidateSet(tuple(out), float(budget), int(horizon_days), int(technicians))


# ---------------------------------------------------------------------------
# Portfolio
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Portfolio:
    investments: tuple[Investment, ...]
    method: str = ""
    objectives: Mapping[str, float] = field(default_factory=dict)

    @property
    def cost(self) -> float:
        return float(sum(inv.cost for inv in self.investments))

    @property
    def ids(self) -> tuple[int, ...]:
        return tuple(inv.id for inv in self.investments)

    @property
    def line_ids(self) -> tuple[int, ...]:
        return tuple(inv.line_id for inv in self.investments)

    def __len__(self) -> int:
        return len(self.investments)

    def to_dict(self) -> dict[str, Any]:
        return {
            "method": self.method,
            "cost": self.cost,
            "n_investments": len(self),
            "objectives": dict(self.objectives),
            "investments": [inv.to_dict() for inv in self.investments],
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], network: Network) -> "Portfolio":
        """Rebuild a portfolio, resolving conductor names against the network's catalog."""
        try:
            invs = tuple(
                Investment(int(d["id"]), str(d["kind"]), int(d["line_id"]), network.conductor(d["conductor"]),
                           float(d["cost"]), int(d["work_days"]), int(d["technicians"]))
                for d in data.get("investments", []))
        except KeyError as exc:
            raise ValueError(f"portfolio investment missing field {exc}") from exc
        return cls(invs, str(data.get("method", "")), dict(data.get("objectives", {})))


# ---------------------------------------------------------------------------
# Schedule
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Schedule:
    """Day-granular crew plan; day 1 is the first working day.

    ``days[t]`` lists the investment ids active on day ``t + 1``.
    """

    project_ids: tuple[int, ...]
    durations: tuple[int, ...]
    technicians: tuple[int, ...]
    pool: int
    days: tuple[tuple[int, ...], ...]
    objective: float | None = None
    optimal: bool | None = None
    weights: tuple[float, ...] | None = None

    @property
    def makespan(self) -> int:
        return max((t + 1 for t, act in enumerate(self.days) if act), default=0)

    def _pos(self) -> dict[int, int]:
        return {pid: k for k, pid in enumerate(self.project_ids)}

    @property
    def start(self) -> dict[int, int]:
        out: dict[int, int] = {}
        for t, act in enumerate(self.days):
            for pid in act:
                out.setdefault(pid, t + 1)
        return out

    @property
    def completion(self) -> dict[int, int]:
        out: dict[int, int] = {}
        for t, act in enumerate(self.days):
            for pid in act:
                out[pid] = t + 1
        return out

    def crew_usage(self) -> list[int]:
        pos = self._pos()
        return [sum(self.technicians[pos[pid]] for pid in act) for act in self.days]

    def weighted_completion(self, weights: Sequence[float] | None = None) -> float:
        w = weights if weights is not None else self.weights
        if w is None:
            raise ValueError("no weights for weighted completion time")
        comp = self.completion
        return float(sum(wi * comp[pid] for wi, pid in zip(w, self.project_ids)))

    def assignment(self) -> dict[int, dict[int, tuple[int, ...]]]:
        """Technician ids (1..pool) per project per day, assigned in project order."""
        pos = self._pos()
        out: dict[int, dict[int, tuple[int, ...]]] = {}
        for t, act in enumerate(self.days):
            nxt = 1
            day: dict[int, tuple[int, ...]] = {}
            for pid in sorted(act, key=pos.__getitem__):
                n = self.technicians[pos[pid]]
                day[pid] = tuple(range(nxt, nxt + n))
                nxt += n
            out[t + 1] = day
        return out

    def check(self, contiguous: bool = False) -> None:
        """Raise ``ValueError`` unless duration, crew, completion and crew-size rules hold."""
        pos = self._pos()
        active_days = {pid: 0 for pid in self.project_ids}
        for t, act in enumerate(self.days):
            if len(set(act)) != len(act):
                raise ValueError(f"day {t + 1}: project listed twice")
            for pid in act:
                if pid not in pos:
                    raise ValueError(f"day {t + 1}: unknown project {pid}")
                active_days[pid] += 1
        for pid, d in zip(self.project_ids, self.durations):
            if active_days[pid] != d:
                raise ValueError(f"project {pid}: {active_days[pid]} active days, needs {d}")
        for t, used in enumerate(self.crew_usage()):
            if used > self.pool:
                raise ValueError(f"day {t + 1}: {used} technicians exceed pool of {self.pool}")
        for day, plan in self.assignment().items():
            seen: set[int] = set()
            for pid, techs in plan.items():
                if len(techs) != self.technicians[pos[pid]]:
                    raise ValueError(f"day {day}: project {pid} crew size mismatch")
                if seen & set(techs) or max(techs, default=0) > self.pool:
                    raise ValueError(f"day {day}: technician double-booked")
                seen |= set(techs)
        comp = self.completion
        for pid in self.project_ids:
            last = max(t + 1 for t, act in enumerate(self.days) if pid in act)
            if comp[pid] != last:
                raise ValueError(f"project {pid}: completion is not its last work day")
        if contiguous:
            st = self.start
            for pid, d in zip(self.project_ids, self.durations):
                if comp[pid] - st[pid] + 1 != d:
                    raise ValueError(f"project {pid} is not worked on contiguous days")

    def gantt_frame(self) -> pd.DataFrame:
        pos = self._pos()
        rows = [(pid, t + 1, self.technicians[pos[pid]]) for t, act in enumerate(self.days) for pid in act]
        return pd.DataFrame(rows, columns=["project", "day", "crew"])

    def to_frame(self, investments: Mapping[int, Investment] | None = None) -> pd.DataFrame:
        st, comp = self.start, self.completion
        rows = []
        for k, pid in enumerate(self.project_ids):
            inv = investments.get(pid) if investments else None
            rows.append({
                "project": pid,
                "kind": inv.kind if inv else "",
                "line_id": inv.line_id if inv else "",
                "duration_days": self.durations[k],
                "technicians": self.technicians[k],
                "weight": self.weights[k] if self.weights is not None else "",
                "start_day": st.get(pid, ""),
                "completion_day": comp.get(pid, ""),
            })
        return pd.DataFrame(rows, columns=["project", "kind", "line_id", "duration_days", "technicians",
                                           "weight", "start_day", "completion_day"])


class InfeasibleError(ValueError):
    """A project cannot be staffed or scheduled with the available crew."""
