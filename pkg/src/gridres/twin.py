"""Digital twin: 15-minute power-flow sweep driven by the weather state machine.

A scenario draws all Poisson event counts for the span up front, then walks
the event steps in order, sampling footprints and line failures. The
resulting outage intervals give a topology per step. Steps are grouped by
topology and each group is solved in one vectorised Newton batch; the
all-lines-in topology is solved once per twin and reused across scenarios.

Loads in islands without the external-grid connection are unserved for the
whole step, generators in those islands are dropped (no microgrid operation).
"""

from __future__ import annotations

import dataclasses
import hashlib
import logging
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

from .grid import STEP_HOURS, Network, TimeSeries
from .powerflow import build_admittance, bus_injections, solve_batch
from .weather import (
    LineOutage,
    WeatherConfig,
    WeatherEvent,
    event_rates,
    lines_in_impact_area,
    sample_event,
    sample_line_outages,
)

log = logging.getLogger(__name__)

MAX_FAILURE_FRACTION = 0.001


@dataclass(frozen=True)
class OutageRecord:
    line_id: int
    start: pd.Timestamp
    restored: pd.Timestamp
    event_id: int  # -1 for forced outages

    @property
    def hours(self) -> float:
        return (self.restored - self.start) / pd.Timedelta(hours=1)


@dataclass(frozen=True)
class InterruptionEpisode:
    load_id: int
    start: pd.Timestamp
    end: pd.Timestamp
    steps: int

    @property
    def minutes(self) -> float:
        return self.steps * STEP_HOURS * 60.0


@dataclass(frozen=True)
class ForcedOutage:
    """A deterministic line outage, used for the one-outage-per-year NPV study."""

    line_id: int
    start: pd.Timestamp
    hours: float


@dataclass(frozen=True)
class Island:
    buses: frozenset[int]
    slack_connected: bool


@dataclass(eq=False)
class SimulationResult:
    start: pd.Timestamp
    span: tuple[int, int]
    line_ids: tuple[int, ...]
    bus_ids: tuple[int, ...]
    load_ids: tuple[int, ...]
    losses_mwh: np.ndarray  # (T,)
    line_loading: np.ndarray  # (T, lines); NaN when de-energized
    bus_vm: np.ndarray  # (T, buses); NaN when de-energized
    unserved_mwh: np.ndarray  # (T, loads)
    demand_mwh: np.ndarray  # (T, loads)
    slack_p_mw: np.ndarray  # (T,)
    island_gen_mw: np.ndarray  # (T,) generation inside the slack island
    converged: np.ndarray  # (T,)
    outages: list[OutageRecord] = field(default_factory=list)
    episodes: list[InterruptionEpisode] = field(default_factory=list)
    events: list[WeatherEvent] = field(default_factory=list)
    convergence_failures: int = 0
    invalid: bool = False

    @property
    def n_steps(self) -> int:
        return self.losses_mwh.shape[0]

    @property
    def hours(self) -> float:
        return self.n_steps * STEP_HOURS

    @property
    def total_unserved_mwh(self) -> float:
        return float(self.unserved_mwh.sum())

    @property
    def total_losses_mwh(self) -> float:
        return float(self.losses_mwh.sum())

    def fingerprint(self) -> str:
        """SHA-256 over every array and ledger entry; equal iff bit-identical."""
        h = hashlib.sha256()
        for name in ("losses_mwh", "line_loading", "bus_vm", "unserved_mwh", "slack_p_mw", "converged"):
            h.update(np.ascontiguousarray(getattr(self, name)).tobytes())
        for rec in self.outages:
            h.update(repr((rec.line_id, rec.start.value, rec.restored.value, rec.event_id)).encode())
        for ep in self.episodes:
            h.update(repr((ep.load_id, ep.start.value, ep.steps)).encode())
        return h.hexdigest()


def scenario_seed(master: int, *key: int) -> np.random.SeedSequence:
    """Independent, reproducible stream for (master seed, key...)."""
    return np.random.SeedSequence(int(master), spawn_key=tuple(int(k) for k in key))


def energized_partition(network: Network, active_lines: Iterable[int]) -> list[Island]:
    """Maximal connected components over active lines (transformers always in)."""
    labels = network.components(list(active_lines))
    slack_label = labels[network.bus_index[network.slack_bus]]
    groups: dict[int, set[int]] = {}
    for bus, lab in zip(network.buses, labels):
        groups.setdefault(int(lab), set()).add(bus.id)
    islands = [Island(frozenset(b), lab == slack_label) for lab, b in groups.items()]
    return sorted(islands, key=lambda isl: min(isl.buses))


class DigitalTwin:
    """Scenario engine bound to one network and one time series.

    Holds a cache of the intact-topology power flow, so reuse one instance
    for every scenario evaluated on the same network.
    """

    def __init__(self, network: Network, timeseries: TimeSeries, *,
                 max_failure_fraction: float = MAX_FAILURE_FRACTION, topology_cache: int = 256):
        self.network = network
        self.timeseries = timeseries
        self.max_failure_fraction = max_failure_fraction
        self.load_p, self.load_q = timeseries.element_matrix(network.loads)
        self.gen_p, self.gen_q = timeseries.element_matrix(network.generators)
        self.injections = bus_injections(network, self.load_p, self.load_q, self.gen_p, self.gen_q)
        bidx = network.bus_index
        self._load_bus = np.array([bidx[ld.bus] for ld in network.loads], dtype=int)
        self._gen_bus = np.array([bidx[g.bus] for g in network.generators], dtype=int)
        self._gen_live = np.array([not g.is_slack_connection for g in network.generators], dtype=bool)
        self._in_service = np.array([ln.in_service for ln in network.lines], dtype=bool)
        self._topo: OrderedDict[frozenset[int], tuple] = OrderedDict()
        self._topo_size = topology_cache
        T, L, N = timeseries.n_steps, len(network.lines), len(network.buses)
        self._base_done = np.zeros(T, dtype=bool)
        self._base = {
            "losses": np.zeros(T), "slack_p": np.zeros(T), "conv": np.zeros(T, dtype=bool),
            "loading": np.full((T, L), np.nan), "vm": np.full((T, N), np.nan),
        }

    # -- topology handling -------------------------------------------------

    def _topology(self, out: frozenset[int]):
        hit = self._topo.get(out)
        if hit is not None:
            self._topo.move_to_end(out)
            return hit
        active = [ln.id for k, ln in enumerate(self.network.lines) if self._in_service[k] and ln.id not in out]
        adm = build_admittance(self.network, active)
        energized = np.zeros(len(self.network.buses), dtype=bool)
        energized[adm.net_bus_pos] = True
        entry = (adm, energized)
        self._topo[out] = entry
        if len(self._topo) > self._topo_size:
            self._topo.popitem(last=False)
        return entry

    def _solve(self, out: frozenset[int], steps: np.ndarray):
        adm, energized = self._topology(out)
        sol = solve_batch(self.network, adm, self.injections[steps])
        return sol, energized

    def _base_solution(self, steps: np.ndarray):
        need = steps[~self._base_done[steps]]
        if need.size:
            sol, _ = self._solve(frozenset(), need)
            b = self._base
            b["losses"][need] = sol.losses_mw
            b["slack_p"][need] = sol.slack_p_mw
            b["conv"][need] = sol.converged
            b["loading"][need] = sol.loading
            b["vm"][need] = sol.vm
            self._base_done[need] = True
        return self._topology(frozenset())[1]

    def warm(self, span: tuple[int, int] | None = None) -> None:
        """Solve the intact topology for ``span`` ahead of time (before forking workers)."""
        k0, k1 = (0, self.timeseries.n_steps) if span is None else span
        self._base_solution(np.arange(k0, k1))

    # -- weather -----------------------------------------------------------

    def _sample_weather(self, rng: np.random.Generator, weather: WeatherConfig, k0: int, k1: int,
                        blocked: np.ndarray):
        """Returns events, outage records and (line_pos, s0, s1) relative intervals."""
        ts, net = self.timeseries, self.network
        T = k1 - k0
        events, records, intervals = [], [], []
        if weather.base_rate_per_hour <= 0 or T == 0:
            return events, records, intervals
        lam = event_rates(ts.month[k0:k1], ts.hour[k0:k1], weather)
        counts = rng.poisson(lam)
        out_until = np.full(len(net.lines), -np.inf)  # hours from span start
        span_start = ts.timestamps[k0]
        for k in np.flatnonzero(counts > 0):
            t = k * STEP_HOURS
            event = sample_event(rng, weather, net.bounds, ts.timestamps[k0 + k], event_id=len(events))
            unavailable = {net.lines[j].id for j in np.flatnonzero((out_until > t) | blocked[k])}
            candidates = [net.line(lid) for lid in sorted(lines_in_impact_area(net, event))]
            outages = sample_line_outages(rng, candidates, weather, event, unavailable)
            for o in outages:
                pos = net.line_index[o.line_id]
                restore_h = (o.restored - span_start) / pd.Timedelta(hours=1)
                out_until[pos] = restore_h
                s1 = int(min(T, np.ceil(restore_h / STEP_HOURS - 1e-9)))
                intervals.append((pos, int(k), max(s1, int(k) + 1)))
                records.append(OutageRecord(o.line_id, event.start, o.restored, event.id))
            events.append(dataclasses.replace(event, outages=tuple(outages)))
        return events, records, intervals

    # -- scenario ----------------------------------------------------------

    def run_scenario(self, weather: WeatherConfig, seed, span: tuple[int, int] | None = None,
                     forced_outages: Sequence[ForcedOutage] = ()) -> SimulationResult:
        net, ts = self.network, self.timeseries
        k0, k1 = (0, ts.n_steps) if span is None else (int(span[0]), int(span[1]))
        if not 0 <= k0 <= k1 <= ts.n_steps:
            raise ValueError(f"span {span} outside time series of {ts.n_steps} steps")
        T, L, N = k1 - k0, len(net.lines), len(net.buses)
        rng = np.random.default_rng(seed)
        span_start = ts.timestamps[k0] if T else ts.start

        out_mask = np.zeros((T, L), dtype=bool)
        records: list[OutageRecord] = []
        for fo in forced_outages:
            pos = net.line_index[fo.line_id]
            s0 = ts.step_of(fo.start) - k0
            s1 = s0 + int(np.ceil(fo.hours / STEP_HOURS - 1e-9))
            lo, hi = max(0, s0), min(T, s1)
            if lo < hi:
                out_mask[lo:hi, pos] = True
            records.append(OutageRecord(fo.line_id, pd.Timestamp(fo.start),
                                        pd.Timestamp(fo.start) + pd.Timedelta(hours=fo.hours), -1))
        events, weather_records, intervals = self._sample_weather(rng, weather, k0, k1, out_mask.copy())
        records.extend(weather_records)
        for pos, s0, s1 in intervals:
            out_mask[s0:s1, pos] = True

        steps_abs = np.arange(k0, k1)
        losses = np.zeros(T)
        slack_p = np.zeros(T)
        conv = np.ones(T, dtype=bool)
        loading = np.full((T, L), np.nan)
        vm = np.full((T, N), np.nan)
        energized = np.zeros((T, N), dtype=bool)

        affected = out_mask.any(axis=1)
        base_rows = np.flatnonzero(~affected)
        if base_rows.size:
            live = self._base_solution(steps_abs[base_rows])
            b = self._base
            sel = steps_abs[base_rows]
            losses[base_rows] = b["losses"][sel]
            slack_p[base_rows] = b["slack_p"][sel]
            conv[base_rows] = b["conv"][sel]
            loading[base_rows] = b["loading"][sel]
            vm[base_rows] = b["vm"][sel]
            energized[base_rows] = live
        rows = np.flatnonzero(affected)
        if rows.size:
            keys, inverse = np.unique(out_mask[rows], axis=0, return_inverse=True)
            inverse = np.asarray(inverse).reshape(-1)
            for g, key in enumerate(keys):
                grp = rows[inverse == g]
                out = frozenset(net.lines[j].id for j in np.flatnonzero(key))
                sol, live = self._solve(out, steps_abs[grp])
                losses[grp] = sol.losses_mw
                slack_p[grp] = sol.slack_p_mw
                conv[grp] = sol.converged
                loading[grp] = sol.loading
                vm[grp] = sol.vm
                energized[grp] = live

        demand = self.load_p[k0:k1] * STEP_HOURS
        dead = ~energized[:, self._load_bus]
        failures = int((~conv).sum())
        if failures:
            for k in np.flatnonzero(~conv):
                # keep the previous step's operating point for loss accounting
                if k > 0:
                    losses[k], slack_p[k] = losses[k - 1], slack_p[k - 1]
                    loading[k], vm[k] = loading[k - 1], vm[k - 1]
                else:
                    losses[k] = slack_p[k] = 0.0
                dead[k] = True
            log.warning("%d non-convergent power-flow steps", failures)
        unserved = np.where(dead, demand, 0.0)
        gen_live = energized[:, self._gen_bus] & self._gen_live[None, :]
        island_gen = (self.gen_p[k0:k1] * gen_live).sum(axis=1)

        return SimulationResult(
            start=span_start,
            span=(k0, k1),
            line_ids=tuple(ln.id for ln in net.lines),
            bus_ids=tuple(b.id for b in net.buses),
            load_ids=tuple(ld.id for ld in net.loads),
            losses_mwh=losses * STEP_HOURS,
            line_loading=loading,
            bus_vm=vm,
            unserved_mwh=unserved,
            demand_mwh=demand,
            slack_p_mw=slack_p,
            island_gen_mw=island_gen,
            converged=conv,
            outages=sorted(records, key=lambda r: (r.start, r.line_id)),
            episodes=_episodes(dead, net, ts.timestamps[k0:k1]),
            events=events,
            convergence_failures=failures,
            invalid=failures > self.max_failure_fraction * max(T, 1),
        )


def _episodes(dead: np.ndarray, network: Network, stamps: pd.DatetimeIndex) -> list[InterruptionEpisode]:
    out = []
    T = dead.shape[0]
    step = pd.Timedelta(hours=STEP_HOURS)
    for j, ld in enumerate(network.loads):
        col = dead[:, j].astype(np.int8)
        if not col.any():
            continue
        edges = np.diff(np.concatenate([[0], col, [0]]))
        starts = np.flatnonzero(edges == 1)
        ends = np.flatnonzero(edges == -1)
        for s, e in zip(starts, ends):
            end = stamps[e] if e < T else stamps[T - 1] + step
            out.append(InterruptionEpisode(ld.id, stamps[s], end, int(e - s)))
    return out


def run_scenario(network: Network, timeseries: TimeSeries, weather_config: WeatherConfig, seed,
                 span: tuple[int, int] | None = None,
                 forced_outages: Sequence[ForcedOutage] = ()) -> SimulationResult:
    """One Monte Carlo scenario; see :class:`DigitalTwin` to reuse cached solves."""
    return DigitalTwin(network, timeseries).run_scenario(weather_config, seed, span, forced_outages)


def write_scenario_dump(result: SimulationResult, directory) -> None:
    """Debug dump: outage ledger and per-step KPI series as CSV."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(
        [(r.line_id, r.start.isoformat(), r.restored.isoformat(), r.event_id) for r in result.outages],
        columns=["line_id", "start", "restored", "event_id"],
    ).to_csv(out / "outages.csv", index=False)
    stamps = pd.date_range(result.start, periods=result.n_steps, freq="15min")
    pd.DataFrame({
        "timestamp": stamps.strftime("%Y-%m-%dT%H:%M:%S"),
        "losses_mwh": result.losses_mwh,
        "unserved_mwh": result.unserved_mwh.sum(axis=1),
        "max_loading": np.nan_to_num(np.nanmax(np.nan_to_num(result.line_loading, nan=0.0), axis=1)),
        "min_vm_pu": np.nanmin(np.where(np.isnan(result.bus_vm), np.inf, result.bus_vm), axis=1),
        "converged": result.converged,
    }).to_csv(out / "steps.csv", index=False)
