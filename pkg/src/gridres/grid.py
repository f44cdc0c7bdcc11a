"""Network data model, conductor catalog and file ingestion.

Networks are immutable. Every transformation (``apply_investments``) returns a
new :class:`Network`; the source object is never touched, so one instance can
be shared by many concurrent scenario evaluations.

File formats
------------
Network file (JSON)::

    {"name": "...",
     "buses":        [{"id", "nominal_voltage" [kV], "x" [km], "y" [km], "subnet"}],
     "lines":        [{"id", "from_bus", "to_bus", "length" [km], "conductor", "in_service"}],
     "loads":        [{"id", "bus", "profile_id", "scaling"}],
     "generators":   [{"id", "bus", "profile_id", "scaling", "rated_mw", "is_slack_connection"}],
     "transformers": [{"id", "hv_bus", "lv_bus", "r_pu", "x_pu", "sn_mva"}]}

Transformer impedances are per-unit on the network-wide 1 MVA base.

Conductor catalog (JSON array), one record per :class:`ConductorType`.

Time series (CSV, optionally gzip-compressed): a ``timestamp`` column in
ISO-8601 followed by ``<profile_id>_p_mw`` and ``<profile_id>_q_mvar`` columns.
Element power is ``scaling * profile``.
"""

from __future__ import annotations

import dataclasses
import json
from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np
import pandas as pd
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

STEP_MINUTES = 15
STEP_HOURS = STEP_MINUTES / 60.0
STEPS_PER_DAY = 96


class NetworkError(ValueError):
    """Raised for malformed or inconsistent network, catalog or time-series input."""


@dataclass(frozen=True)
class Bus:
    id: int
    nominal_voltage: float  # kV
    x: float  # km
    y: float  # km
    subnet: str = ""


@dataclass(frozen=True)
class ConductorType:
    """A conductor and the resources needed to install it.

    ``upgrade_*`` fields price re-conductoring an underground line with this
    type; ``underground_*`` fields price burying an overhead line with it.
    ``asset_value_per_km`` is the book value used for plant depreciation.
    """

    name: str
    r_per_km: float  # ohm/km
    x_per_km: float  # ohm/km
    max_current: float  # kA
    overhead: bool
    upgrade_cost_per_km: float = 0.0
    upgrade_days_per_km: float = 0.0
    upgrade_technicians: int = 0
    underground_cost_per_km: float = 0.0
    underground_days_per_km: float = 0.0
    underground_technicians: int = 0
    asset_value_per_km: float = 0.0


@dataclass(frozen=True)
class Line:
    id: int
    from_bus: int
    to_bus: int
    length: float  # km
    conductor: ConductorType
    in_service: bool = True

    @property
    def overhead(self) -> bool:
        return self.conductor.overhead


@dataclass(frozen=True)
class Load:
    id: int
    bus: int
    profile_id: str
    scaling: float = 1.0


@dataclass(frozen=True)
class Generator:
    id: int
    bus: int
    profile_id: str | None = None
    scaling: float = 1.0
    rated_mw: float = 0.0
    is_slack_connection: bool = False


@dataclass(frozen=True)
class Transformer:
    id: int
    hv_bus: int
    lv_bus: int
    r_pu: float
    x_pu: float
    sn_mva: float = 1.0


@dataclass(frozen=True)
class Network:
    name: str
    buses: tuple[Bus, ...]
    lines: tuple[Line, ...]
    loads: tuple[Load, ...]
    generators: tuple[Generator, ...]
    transformers: tuple[Transformer, ...] = ()
    catalog: tuple[ConductorType, ...] = field(default=(), compare=False)

    @cached_property
    def bus_index(self) -> dict[int, int]:
        return {b.id: i for i, b in enumerate(self.buses)}

    @cached_property
    def line_index(self) -> dict[int, int]:
        return {ln.id: i for i, ln in enumerate(self.lines)}

    def line(self, line_id: int) -> Line:
        try:
            return self.lines[self.line_index[line_id]]
        except KeyError:
            raise NetworkError(f"unknown line id {line_id}") from None

    def bus(self, bus_id: int) -> Bus:
        return self.buses[self.bus_index[bus_id]]

    @cached_property
    def slack(self) -> Generator:
        return next(g for g in self.generators if g.is_slack_connection)

    @property
    def slack_bus(self) -> int:
        return self.slack.bus

    @cached_property
    def bounds(self) -> tuple[float, float, float, float]:
        """(x_min, x_max, y_min, y_max) over all bus coordinates."""
        xs = [b.x for b in self.buses]
        ys = [b.y for b in self.buses]
        return min(xs), max(xs), min(ys), max(ys)

    @cached_property
    def subnets(self) -> tuple[str, ...]:
        return tuple(sorted({b.subnet for b in self.buses}))

    @cached_property
    def line_segments(self) -> np.ndarray:
        """(n_lines, 4) array of x0, y0, x1, y1 in km."""
        seg = np.empty((len(self.lines), 4))
        for k, ln in enumerate(self.lines):
            a, b = self.bus(ln.from_bus), self.bus(ln.to_bus)
            seg[k] = (a.x, a.y, b.x, b.y)
        return seg

    def conductor(self, name: str) -> ConductorType:
        for c in self.catalog:
            if c.name == name:
                return c
        raise NetworkError(f"unknown conductor {name!r}")

    def components(self, active_lines: Iterable[int] | None = None) -> np.ndarray:
        """Component label per bus (network bus order) over active lines and transformers."""
        if active_lines is None:
            active_lines = [ln.id for ln in self.lines if ln.in_service]
        idx = self.bus_index
        rows, cols = [], []
        for lid in active_lines:
            ln = self.line(lid)
            rows.append(idx[ln.from_bus])
            cols.append(idx[ln.to_bus])
        for tr in self.transformers:
            rows.append(idx[tr.hv_bus])
            cols.append(idx[tr.lv_bus])
        n = len(self.buses)
        graph = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
        _, labels = connected_components(graph, directed=False)
        return labels


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

def _field(record: Mapping[str, Any], key: str, where: str, kind=float, default=...):
    if key not in record:
        if default is ...:
            raise NetworkError(f"{where}: missing field {key!r}")
        return default
    value = record[key]
    try:
        if kind is bool:
            if not isinstance(value, bool):
                raise TypeError
            return value
        if kind is int and (isinstance(value, bool) or int(value) != value):
            raise TypeError
        return kind(value)
    except (TypeError, ValueError):
        raise NetworkError(f"{where}.{key}: expected {kind.__name__}, got {value!r}") from None


def _read_json(path: Path) -> Any:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise NetworkError(f"{path}: {exc.strerror}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise NetworkError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None


def parse_catalog(records: Sequence[Mapping[str, Any]], source: str = "catalog") -> tuple[ConductorType, ...]:
    if not isinstance(records, list):
        raise NetworkError(f"{source}: expected a JSON array of conductor records")
    out = []
    for i, rec in enumerate(records):
        where = f"{source}[{i}]"
        c = ConductorType(
            name=_field(rec, "name", where, str),
            r_per_km=_field(rec, "r_per_km", where),
            x_per_km=_field(rec, "x_per_km", where),
            max_current=_field(rec, "max_current", where),
            overhead=_field(rec, "overhead", where, bool),
            upgrade_cost_per_km=_field(rec, "upgrade_cost_per_km", where, default=0.0),
            upgrade_days_per_km=_field(rec, "upgrade_days_per_km", where, default=0.0),
            upgrade_technicians=_field(rec, "upgrade_technicians", where, int, default=0),
            underground_cost_per_km=_field(rec, "underground_cost_per_km", where, default=0.0),
            underground_days_per_km=_field(rec, "underground_days_per_km", where, default=0.0),
            underground_technicians=_field(rec, "underground_technicians", where, int, default=0),
            asset_value_per_km=_field(rec, "asset_value_per_km", where, default=0.0),
        )
        if c.r_per_km <= 0:
            raise NetworkError(f"{where}.r_per_km: must be > 0")
        if c.max_current <= 0:
            raise NetworkError(f"{where}.max_current: must be > 0")
        costs = (c.upgrade_cost_per_km, c.underground_cost_per_km, c.asset_value_per_km)
        if min(costs) < 0:
            raise NetworkError(f"{where}: costs must be >= 0")
        out.append(c)
    _check_unique([c.name for c in out], f"{source} conductor name")
    return tuple(out)


def _check_unique(ids: Sequence[Any], what: str) -> None:
    dup = [k for k, n in Counter(ids).items() if n > 1]
    if dup:
        raise NetworkError(f"duplicate {what}: {dup[0]!r}")


def parse_network(data: Mapping[str, Any], catalog: Sequence[ConductorType], source: str = "network") -> Network:
    """Build and validate a :class:`Network` from its decoded JSON form."""
    by_name = {c.name: c for c in catalog}
    for key in ("buses", "lines", "loads", "generators"):
        if not isinstance(data.get(key), list):
            raise NetworkError(f"{source}: missing top-level array {key!r}")

    buses = []
    for i, rec in enumerate(data["buses"]):
        where = f"{source}.buses[{i}]"
        b = Bus(
            id=_field(rec, "id", where, int),
            nominal_voltage=_field(rec, "nominal_voltage", where),
            x=_field(rec, "x", where),
            y=_field(rec, "y", where),
            subnet=_field(rec, "subnet", where, str, default=""),
        )
        if b.nominal_voltage <= 0:
            raise NetworkError(f"{where}.nominal_voltage: must be > 0")
        buses.append(b)
    _check_unique([b.id for b in buses], "bus id")
    bus_ids = {b.id for b in buses}
    vn = {b.id: b.nominal_voltage for b in buses}

    def need_bus(bid: int, where: str) -> int:
        if bid not in bus_ids:
            raise NetworkError(f"{where}: unknown bus {bid}")
        return bid

    lines = []
    for i, rec in enumerate(data["lines"]):
        where = f"{source}.lines[{i}]"
        cname = _field(rec, "conductor", where, str)
        if cname not in by_name:
            raise NetworkError(f"{where}.conductor: unknown conductor {cname!r}")
        ln = Line(
            id=_field(rec, "id", where, int),
            from_bus=need_bus(_field(rec, "from_bus", where, int), where + ".from_bus"),
            to_bus=need_bus(_field(rec, "to_bus", where, int), where + ".to_bus"),
            length=_field(rec, "length", where),
            conductor=by_name[cname],
            in_service=_field(rec, "in_service", where, bool, default=True),
        )
        if ln.from_bus == ln.to_bus:
            raise NetworkError(f"{where}: from_bus equals to_bus")
        if ln.length <= 0:
            raise NetworkError(f"{where}.length: must be > 0")
        if not np.isclose(vn[ln.from_bus], vn[ln.to_bus]):
            raise NetworkError(f"{where}: connects different voltage levels; use a transformer")
        lines.append(ln)
    _check_unique([ln.id for ln in lines], "line id")

    loads = []
    for i, rec in enumerate(data["loads"]):
        where = f"{source}.loads[{i}]"
        loads.append(Load(
            id=_field(rec, "id", where, int),
            bus=need_bus(_field(rec, "bus", where, int), where + ".bus"),
            profile_id=_field(rec, "profile_id", where, str),
            scaling=_field(rec, "scaling", where, default=1.0),
        ))
    _check_unique([ld.id for ld in loads], "load id")

    gens = []
    for i, rec in enumerate(data["generators"]):
        where = f"{source}.generators[{i}]"
        slack = _field(rec, "is_slack_connection", where, bool, default=False)
        profile = rec.get("profile_id")
        if profile is None and not slack:
            raise NetworkError(f"{where}: missing field 'profile_id'")
        gens.append(Generator(
            id=_field(rec, "id", where, int),
            bus=need_bus(_field(rec, "bus", where, int), where + ".bus"),
            profile_id=None if profile is None else str(profile),
            scaling=_field(rec, "scaling", where, default=1.0),
            rated_mw=_field(rec, "rated_mw", where, default=0.0),
            is_slack_connection=slack,
        ))
    _check_unique([g.id for g in gens], "generator id")
    n_slack = sum(g.is_slack_connection for g in gens)
    if n_slack != 1:
        raise NetworkError(f"{source}: expected exactly one external-grid slack connection, found {n_slack}")

    trafos = []
    for i, rec in enumerate(data.get("transformers", [])):
        where = f"{source}.transformers[{i}]"
        tr = Transformer(
            id=_field(rec, "id", where, int),
            hv_bus=need_bus(_field(rec, "hv_bus", where, int), where + ".hv_bus"),
            lv_bus=need_bus(_field(rec, "lv_bus", where, int), where + ".lv_bus"),
            r_pu=_field(rec, "r_pu", where),
            x_pu=_field(rec, "x_pu", where),
            sn_mva=_field(rec, "sn_mva", where, default=1.0),
        )
        if tr.r_pu == 0 and tr.x_pu == 0:
            raise NetworkError(f"{where}: zero impedance")
        trafos.append(tr)
    _check_unique([t.id for t in trafos], "transformer id")

    net = Network(
        name=str(data.get("name", source)),
        buses=tuple(buses),
        lines=tuple(lines),
        loads=tuple(loads),
        generators=tuple(gens),
        transformers=tuple(trafos),
        catalog=tuple(catalog),
    )
    labels = net.components([ln.id for ln in net.lines])
    if len(set(labels.tolist())) > 1:
        stray = [b.id for b, lab in zip(net.buses, labels) if lab != labels[net.bus_index[net.slack_bus]]]
        raise NetworkError(f"{source}: network graph is disconnected (bus {stray[0]} unreachable from slack)")
    return net


def load_catalog(catalog_file: str | Path) -> tuple[ConductorType, ...]:
    return parse_catalog(_read_json(Path(catalog_file)), str(catalog_file))


def load_network(network_file: str | Path, catalog_file: str | Path) -> Network:
    """Read and validate a network file against a conductor catalog."""
    catalog = load_catalog(catalog_file)
    data = _read_json(Path(network_file))
    if not isinstance(data, dict):
        raise NetworkError(f"{network_file}: expected a JSON object")
    return parse_network(data, catalog, str(network_file))


def network_to_dict(net: Network) -> dict[str, Any]:
    return {
        "name": net.name,
        "buses": [dataclasses.asdict(b) for b in net.buses],
        "lines": [
            {"id": ln.id, "from_bus": ln.from_bus, "to_bus": ln.to_bus, "length": ln.length,
             "conductor": ln.conductor.name, "in_service": ln.in_service}
            for ln in net.lines
        ],
        "loads": [dataclasses.asdict(ld) for ld in net.loads],
        "generators": [dataclasses.asdict(g) for g in net.generators],
        "transformers": [dataclasses.asdict(t) for t in net.transformers],
    }


def catalog_to_list(catalog: Iterable[ConductorType]) -> list[dict[str, Any]]:
    return [dataclasses.asdict(c) for c in catalog]


def save_network(net: Network, network_file: str | Path, catalog_file: str | Path | None = None) -> None:
    Path(network_file).write_text(json.dumps(network_to_dict(net), indent=1) + "\n")
    if catalog_file is not None:
        Path(catalog_file).write_text(json.dumps(catalog_to_list(net.catalog), indent=1) + "\n")


# ---------------------------------------------------------------------------
# Investments
# ---------------------------------------------------------------------------

def apply_investments(network: Network, selected: Iterable[Any]) -> Network:
    """Return a copy of ``network`` with each selected investment's conductor installed.

    ``selected`` holds objects exposing ``kind`` ("bury" or "upgrade"),
    ``line_id`` and ``conductor``. Burying an underground line, upgrading an
    overhead line, or touching the same line twice raises :class:`NetworkError`.
    """
    lines = list(network.lines)
    touched: set[int] = set()
    for inv in selected:
        if inv.line_id not in network.line_index:
            raise NetworkError(f"investment {getattr(inv, 'id', '?')}: unknown line {inv.line_id}")
        if inv.line_id in touched:
            raise NetworkError(f"line {inv.line_id} targeted by more than one investment")
        k = network.line_index[inv.line_id]
        ln = lines[k]
        if inv.kind == "bury":
            if not ln.overhead:
                raise NetworkError(f"line {ln.id} is already underground; cannot bury")
            if inv.conductor.overhead:
                raise NetworkError(f"bury of line {ln.id} needs an underground conductor")
        elif inv.kind == "upgrade":
            if ln.overhead:
                raise NetworkError(f"line {ln.id} is overhead; upgrade applies to underground lines")
            if inv.conductor.max_current <= ln.conductor.max_current:
                raise NetworkError(f"upgrade of line {ln.id} does not raise max_current")
        else:
            raise NetworkError(f"unknown investment kind {inv.kind!r}")
        lines[k] = dataclasses.replace(ln, conductor=inv.conductor)
        touched.add(inv.line_id)
    if not touched:
        return network
    return dataclasses.replace(network, lines=tuple(lines))


# ---------------------------------------------------------------------------
# Time series
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TimeSeries:
    """15-minute active/reactive power profiles keyed by profile id."""

    timestamps: pd.DatetimeIndex
    p_mw: Mapping[str, np.ndarray]
    q_mvar: Mapping[str, np.ndarray]

    @property
    def start(self) -> pd.Timestamp:
        return self.timestamps[0]

    @property
    def n_steps(self) -> int:
        return len(self.timestamps)

    def __len__(self) -> int:
        return self.n_steps

    @cached_property
    def month(self) -> np.ndarray:
        return np.asarray(self.timestamps.month)

    @cached_property
    def hour(self) -> np.ndarray:
        return np.asarray(self.timestamps.hour)

    def step_of(self, when: Any) -> int:
        """Index of the step starting at ``when``."""
        ts = pd.Timestamp(when)
        offset = (ts - self.start) / pd.Timedelta(minutes=STEP_MINUTES)
        k = int(np.floor(offset))
        if not 0 <= k <= self.n_steps:
            raise NetworkError(f"{ts} outside time series range {self.start} .. {self.timestamps[-1]}")
        return k

    def span_of(self, start: Any, end_inclusive_day: Any) -> tuple[int, int]:
        """Step range covering whole days ``start`` through ``end_inclusive_day``."""
        k0 = self.step_of(pd.Timestamp(start).normalize())
        k1 = self.step_of(pd.Timestamp(end_inclusive_day).normalize() + pd.Timedelta(days=1))
        return k0, k1

    def element_matrix(self, elements: Sequence[Load | Generator]) -> tuple[np.ndarray, np.ndarray]:
        """(n_steps, n_elements) P and Q matrices; ``scaling * profile`` per element."""
        p = np.zeros((self.n_steps, len(elements)))
        q = np.zeros((self.n_steps, len(elements)))
        for j, el in enumerate(elements):
            if el.profile_id is None:
                continue
            p[:, j] = el.scaling * self.p_mw[el.profile_id]
            q[:, j] = el.scaling * self.q_mvar[el.profile_id]
        return p, q


def load_timeseries(ts_file: str | Path, network: Network | None = None) -> TimeSeries:
    """Read a profile CSV and check it against the profiles ``network`` references."""
    try:
        frame = pd.read_csv(ts_file)
    except (OSError, pd.errors.ParserError) as exc:
        raise NetworkError(f"{ts_file}: {exc}") from None
    if frame.columns[0] != "timestamp":
        raise NetworkError(f"{ts_file}: first column must be 'timestamp'")
    try:
        stamps = pd.DatetimeIndex(pd.to_datetime(frame["timestamp"]))
    except (ValueError, TypeError) as exc:
        raise NetworkError(f"{ts_file}: bad timestamp: {exc}") from None
    if len(stamps) < 1:
        raise NetworkError(f"{ts_file}: no rows")
    if len(stamps) > 1:
        steps = np.diff(stamps.asi8)
        bad = np.flatnonzero(steps != pd.Timedelta(minutes=STEP_MINUTES).value)
        if bad.size:
            raise NetworkError(
                f"{ts_file}: row {bad[0] + 2}: step is not {STEP_MINUTES} minutes "
                f"({stamps[bad[0]]} -> {stamps[bad[0] + 1]})"
            )
    p, q = {}, {}
    for col in frame.columns[1:]:
        values = frame[col].to_numpy(dtype=float)
        if np.isnan(values).any():
            row = int(np.flatnonzero(np.isnan(values))[0]) + 2
            raise NetworkError(f"{ts_file}: column {col!r} is ragged (missing value at row {row})")
        if col.endswith("_p_mw"):
            p[col[: -len("_p_mw")]] = values
        elif col.endswith("_q_mvar"):
            q[col[: -len("_q_mvar")]] = values
        else:
            raise NetworkError(f"{ts_file}: unexpected column {col!r}")
    for pid in set(p) | set(q):
        if pid not in p or pid not in q:
            raise NetworkError(f"{ts_file}: profile {pid!r} needs both _p_mw and _q_mvar columns")
    if network is not None:
        needed = [ld.profile_id for ld in network.loads] + [
            g.profile_id for g in network.generators if g.profile_id is not None
        ]
        for pid in needed:
            if pid not in p:
                raise NetworkError(f"{ts_file}: missing profile {pid!r}")
    return TimeSeries(timestamps=stamps, p_mw=p, q_mvar=q)


def write_timeseries(ts: TimeSeries, path: str | Path, decimals: int = 6) -> None:
    cols: dict[str, Any] = {"timestamp": ts.timestamps.strftime("%Y-%m-%dT%H:%M:%S")}
    for pid in sorted(ts.p_mw):
        cols[f"{pid}_p_mw"] = np.round(ts.p_mw[pid], decimals)
        cols[f"{pid}_q_mvar"] = np.round(ts.q_mvar[pid], decimals)
    pd.DataFrame(cols).to_csv(path, index=False)
