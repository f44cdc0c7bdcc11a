"""Generator for the bundled example grids and their 2016 load/generation profiles.

The shipped files under ``gridres/data`` were produced by::

    python -m gridres.synth src/gridres/data

Two grids are built:

* ``rural13`` - low-voltage rural grid: 14 buses, 13 lines, one 20/0.4 kV
  transformer. The left feeder is overhead (lines 7, 5, 6, 1 from the
  busbar outwards); the rest is underground cable with one tie.
* ``comm113`` - medium-voltage commercial grid: 107 buses, 113 lines, two
  110/20 kV transformers, six feeders (subnets). Feeders 1 and 4 are radial
  with overhead head lines 8 and 39; feeder 2's overhead head line 19 sits
  on a loop. Lines 103/104 feed an industrial bus on the largest cable.
"""

from __future__ import annotations

import json
import math
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from .grid import TimeSeries, write_timeseries

PF_TAN = math.tan(math.acos(0.97))

RURAL_CATALOG = [
    {"name": "NAYY 4x150SE 0.6/1kV", "r_per_km": 0.208, "x_per_km": 0.08, "max_current": 0.27,
     "overhead": False, "asset_value_per_km": 120000.0},
    {"name": "NAYY 4x240SE 0.6/1kV", "r_per_km": 0.125, "x_per_km": 0.08, "max_current": 0.364,
     "overhead": False,
     "upgrade_cost_per_km": 50000.0, "upgrade_days_per_km": 2.0, "upgrade_technicians": 7,
     "underground_cost_per_km": 175000.0, "underground_days_per_km": 8.0, "underground_technicians": 12,
     "asset_value_per_km": 175000.0},
    {"name": "94-AL1/15-ST1A 0.4", "r_per_km": 0.306, "x_per_km": 0.29, "max_current": 0.35,
     "overhead": True, "asset_value_per_km": 60000.0},
]

COMM_CATALOG = [
    {"name": "48-AL1/8-ST1A 20.0", "r_per_km": 0.5939, "x_per_km": 0.372, "max_current": 0.21,
     "overhead": True, "asset_value_per_km": 90000.0},
    {"name": "NA2XS2Y 1x95 RM/25 12/20 kV", "r_per_km": 0.313, "x_per_km": 0.132, "max_current": 0.252,
     "overhead": False,
     "underground_cost_per_km": 250000.0, "underground_days_per_km": 21.0, "underground_technicians": 8,
     "asset_value_per_km": 250000.0},
    {"name": "NA2XS2Y 1x120 RM/25 12/20 kV", "r_per_km": 0.253, "x_per_km": 0.119, "max_current": 0.28,
     "overhead": False,
     "upgrade_cost_per_km": 135000.0, "upgrade_days_per_km": 7.0, "upgrade_technicians": 6,
     "asset_value_per_km": 135000.0},
    {"name": "NA2XS2Y 1x150 RM/25 12/20 kV", "r_per_km": 0.206, "x_per_km": 0.116, "max_current": 0.319,
     "overhead": False,
     "upgrade_cost_per_km": 150000.0, "upgrade_days_per_km": 8.0, "upgrade_technicians": 6,
     "asset_value_per_km": 150000.0},
    {"name": "NA2XS2Y 1x185 RM/25 12/20 kV", "r_per_km": 0.161, "x_per_km": 0.117, "max_current": 0.362,
     "overhead": False,
     "upgrade_cost_per_km": 180000.0, "upgrade_days_per_km": 9.0, "upgrade_technicians": 6,
     "asset_value_per_km": 180000.0},
]

OH_LV = "94-AL1/15-ST1A 0.4"
UG_LV = "NAYY 4x150SE 0.6/1kV"
OH_MV = "48-AL1/8-ST1A 20.0"
UG_MV = ["NA2XS2Y 1x95 RM/25 12/20 kV", "NA2XS2Y 1x120 RM/25 12/20 kV", "NA2XS2Y 1x150 RM/25 12/20 kV"]
UG_MV_MAX = "NA2XS2Y 1x185 RM/25 12/20 kV"


# ---------------------------------------------------------------------------
# rural13
# ---------------------------------------------------------------------------

def rural13() -> dict:
    buses = [
        (0, 20.0, 0.0, 0.0, "feeder1"),
        (1, 0.4, 0.0, 0.010, "feeder1"),
        # left feeder, overhead
        (2, 0.4, -0.012, 0.010, "feeder1"),
        (3, 0.4, -0.021, 0.012, "feeder1"),
        (4, 0.4, -0.060, 0.030, "feeder1"),
        (5, 0.4, -0.110, 0.062, "feeder1"),
        # north-east feeder
        (6, 0.4, 0.030, 0.040, "feeder2"),
        (7, 0.4, 0.060, 0.085, "feeder2"),
        (8, 0.4, 0.095, 0.120, "feeder2"),
        (9, 0.4, 0.140, 0.150, "feeder2"),
        # south-east feeder
        (10, 0.4, 0.040, -0.020, "feeder3"),
        (11, 0.4, 0.085, -0.035, "feeder3"),
        (12, 0.4, 0.130, -0.020, "feeder3"),
        (13, 0.4, 0.175, 0.040, "feeder3"),
    ]
    lines = [
        (7, 1, 2, 0.012, OH_LV),
        (5, 2, 3, 0.00925714285714286, OH_LV),
        (6, 3, 4, 0.045, OH_LV),
        (1, 4, 5, 0.060, OH_LV),
        (0, 1, 6, 0.050, UG_LV),
        (2, 6, 7, 0.055, UG_LV),
        (3, 7, 8, 0.050, UG_LV),
        (4, 8, 9, 0.055, UG_LV),
        (8, 1, 10, 0.045, UG_LV),
        (9, 10, 11, 0.048, UG_LV),
        (10, 11, 12, 0.047, UG_LV),
        (11, 12, 13, 0.075, UG_LV),
        (12, 9, 13, 0.115, UG_LV),
    ]
    profiles = ["L2-A", "H0-A", "H0-B"]
    loads = []
    sizes = [0.0040, 0.0042, 0.0038, 0.0045, 0.0036, 0.0040, 0.0034, 0.0041, 0.0039, 0.0037, 0.0043, 0.0035]
    for k, bus in enumerate(range(2, 14)):
        loads.append({"id": k, "bus": bus, "profile_id": profiles[k % 3], "scaling": sizes[k]})
    return {
        "name": "rural13",
        "buses": [dict(zip(("id", "nominal_voltage", "x", "y", "subnet"), b)) for b in buses],
        "lines": [
            {"id": i, "from_bus": f, "to_bus": t, "length": length, "conductor": c, "in_service": True}
            for i, f, t, length, c in sorted(lines)
        ],
        "loads": loads,
        "generators": [{"id": 0, "bus": 0, "profile_id": None, "scaling": 1.0, "rated_mw": 0.0,
                        "is_slack_connection": True}],
        "transformers": [{"id": 0, "hv_bus": 0, "lv_bus": 1, "r_pu": 0.0625, "x_pu": 0.25, "sn_mva": 0.16}],
    }


# ---------------------------------------------------------------------------
# comm113
# ---------------------------------------------------------------------------

def comm113(seed: int = 11) -> dict:
    rng = np.random.default_rng(seed)
    buses = [
        {"id": 0, "nominal_voltage": 110.0, "x": 0.0, "y": 0.0, "subnet": "feeder1"},
        {"id": 1, "nominal_voltage": 20.0, "x": 0.05, "y": 0.0, "subnet": "feeder1"},
        {"id": 2, "nominal_voltage": 20.0, "x": -0.05, "y": 0.0, "subnet": "feeder4"},
    ]
    edges: list[dict] = []  # role, from, to, length, conductor
    feeder_sizes = [18, 17, 17, 17, 17, 17]
    trunk_len = [11, 10, 10, 11, 10, 10]
    lateral_at = [3, 3, 4, 3, 4, 3]  # trunk position where the lateral starts (0-based)
    next_bus = 3
    trunks: dict[int, list[int]] = {}
    laterals: dict[int, list[int]] = {}
    for f in range(6):
        root = 1 if f < 3 else 2
        theta = math.radians(30 + 60 * f)
        subnet = f"feeder{f + 1}"
        rx, ry = (0.05 if f < 3 else -0.05), 0.0
        trunk = []
        for k in range(trunk_len[f]):
            d = 0.6 + 0.5 * k
            buses.append({"id": next_bus, "nominal_voltage": 20.0,
                          "x": round(rx + d * math.cos(theta), 4), "y": round(ry + d * math.sin(theta), 4),
                          "subnet": subnet})
            trunk.append(next_bus)
            next_bus += 1
        lateral = []
        base = trunk[lateral_at[f]]
        bx, by = buses[base]["x"], buses[base]["y"]
        phi = theta + math.radians(50)
        for k in range(feeder_sizes[f] - trunk_len[f]):
            d = 0.45 * (k + 1)
            buses.append({"id": next_bus, "nominal_voltage": 20.0,
                          "x": round(bx + d * math.cos(phi), 4), "y": round(by + d * math.sin(phi), 4),
                          "subnet": subnet})
            lateral.append(next_bus)
            next_bus += 1
        trunks[f], laterals[f] = trunk, lateral
        edges.append({"role": f"head{f + 1}", "from": root, "to": trunk[0]})
        for a, b in zip(trunk, trunk[1:]):
            edges.append({"role": f"trunk{f + 1}", "from": a, "to": b})
        prev = base
        for b in lateral:
            edges.append({"role": f"lateral{f + 1}", "from": prev, "to": b})
            prev = b
    industrial = next_bus
    buses.append({"id": industrial, "nominal_voltage": 20.0, "x": 0.0, "y": -0.4, "subnet": "feeder1"})
    edges.append({"role": "indA", "from": 1, "to": industrial})
    edges.append({"role": "indB", "from": 2, "to": industrial})

    # loop-closing ties; feeders 1 and 4 stay radial
    ties = [
        (trunks[1][-1], trunks[2][-1]),  # feeder 2 <-> feeder 3: puts head line 19 on a loop
        (trunks[1][7], laterals[1][-1]),
        (trunks[2][7], laterals[2][-1]),
        (trunks[4][-1], trunks[5][-1]),
        (trunks[4][8], laterals[4][-1]),
        (trunks[5][7], laterals[5][-1]),
        (trunks[2][2], trunks[1][2]),
        (laterals[4][1], trunks[4][1]),
    ]
    for a, b in ties:
        edges.append({"role": "tie", "from": a, "to": b})

    pos = {b["id"]: (b["x"], b["y"]) for b in buses}

    def geo_len(a: int, b: int) -> float:
        (x0, y0), (x1, y1) = pos[a], pos[b]
        return round(max(0.2, math.hypot(x1 - x0, y1 - y0)) * 1.15, 3)

    # large generators sit where a lateral branches off the trunk
    gen_buses = {4: trunks[4][lateral_at[4]], 5: trunks[5][lateral_at[5]]}
    gen_set = set(gen_buses.values())

    fixed_ids = {"head1": 8, "head2": 19, "head4": 39, "indA": 103, "indB": 104}
    free_ids = iter(i for i in range(113) if i not in fixed_ids.values())
    lines = []
    for e in edges:
        role, a, b = e["role"], e["from"], e["to"]
        lid = fixed_ids.get(role)
        if lid is None:
            lid = next(free_ids)
        source_adjacent = role.startswith("head") or role.startswith("ind") or a in gen_set or b in gen_set
        if role == "head1":
            length, cond = 0.61, OH_MV
        elif role == "head2":
            length, cond = 0.70, OH_MV
        elif role == "head4":
            length, cond = 1.19, OH_MV
        elif role.startswith("ind"):
            length, cond = 0.42, UG_MV_MAX
        elif source_adjacent:
            length = geo_len(a, b) if not role.startswith("head") else 0.65
            cond = UG_MV[1] if role.startswith("head") else UG_MV[int(rng.integers(0, 2))]
        else:
            length = geo_len(a, b)
            cond = OH_MV if rng.random() < 0.45 else UG_MV[int(rng.integers(0, 3))]
        lines.append({"id": lid, "from_bus": a, "to_bus": b, "length": length, "conductor": cond,
                      "in_service": True})
    lines.sort(key=lambda r: r["id"])

    profiles = ["G0-A", "G1-B", "H0-L"]
    loads = []
    lid = 0
    for b in buses[3:-1]:
        loads.append({"id": lid, "bus": b["id"], "profile_id": profiles[lid % 3],
                      "scaling": round(float(rng.uniform(0.05, 0.11)), 4)})
        lid += 1
    loads.append({"id": lid, "bus": industrial, "profile_id": "G1-B", "scaling": 0.35})

    gens = [{"id": 0, "bus": 0, "profile_id": None, "scaling": 1.0, "rated_mw": 0.0, "is_slack_connection": True},
            {"id": 1, "bus": gen_buses[4], "profile_id": "WP4", "scaling": 2.0, "rated_mw": 2.0,
             "is_slack_connection": False},
            {"id": 2, "bus": gen_buses[5], "profile_id": "PV3", "scaling": 1.5, "rated_mw": 1.5,
             "is_slack_connection": False}]
    small_pv = [trunks[f][-2] for f in range(6)] + [laterals[f][1] for f in (0, 2, 3, 5)]
    for k, b in enumerate(small_pv):
        gens.append({"id": 3 + k, "bus": b, "profile_id": "PV3", "scaling": 0.12, "rated_mw": 0.12,
                     "is_slack_connection": False})
    trafos = [{"id": 0, "hv_bus": 0, "lv_bus": 1, "r_pu": 0.0002, "x_pu": 0.0048, "sn_mva": 25.0},
              {"id": 1, "hv_bus": 0, "lv_bus": 2, "r_pu": 0.0002, "x_pu": 0.0048, "sn_mva": 25.0}]
    return {"name": "comm113", "buses": buses, "lines": lines, "loads": loads, "generators": gens,
            "transformers": trafos}


# ---------------------------------------------------------------------------
# Profiles
# ---------------------------------------------------------------------------

def _calendar(start: str, days: int) -> pd.DatetimeIndex:
    return pd.date_range(start, periods=days * 96, freq="15min")


def profiles_2016(kinds: list[str], seed: int) -> TimeSeries:
    """Normalised (per-MW) profiles for 2016, one per kind, with reactive power at pf 0.97."""
    stamps = _calendar("2016-01-01", 366)
    rng = np.random.default_rng(seed)
    hour = stamps.hour.to_numpy() + stamps.minute.to_numpy() / 60.0
    doy = stamps.dayofyear.to_numpy()
    weekday = stamps.dayofweek.to_numpy() < 5
    winterness = 0.5 * (1 + np.cos(2 * np.pi * (doy - 15) / 366.0))
    p, q = {}, {}
    for kind in kinds:
        noise = _ar1(rng, len(stamps), 0.97, 0.05)
        if kind.startswith("H0"):
            shape = (0.35 + 0.35 * np.exp(-((hour - 7.5) / 1.5) ** 2)
                     + 0.55 * np.exp(-((hour - 19.0) / 2.5) ** 2) + 0.15 * np.exp(-((hour - 12.5) / 1.5) ** 2))
            values = shape * (0.8 + 0.35 * winterness) * (1 + noise)
            is_gen = False
        elif kind.startswith("L2"):
            shape = 0.45 + 0.40 * np.exp(-((hour - 10.0) / 3.5) ** 2) + 0.25 * np.exp(-((hour - 18.0) / 2.0) ** 2)
            values = shape * (0.95 + 0.1 * winterness) * (1 + noise)
            is_gen = False
        elif kind.startswith("G"):
            business = np.where(weekday, 1.0, 0.35) * np.clip(np.sin(np.pi * (hour - 6.5) / 12.0), 0, None)
            values = (0.25 + 0.7 * business) * (0.9 + 0.2 * winterness) * (1 + noise)
            is_gen = False
        elif kind.startswith("PV"):
            day_len = 12.0 + 4.0 * np.cos(2 * np.pi * (doy - 172) / 366.0)
            sun = np.clip(np.cos(np.pi * (hour - 13.0) / day_len), 0, None) ** 1.5
            sun[np.abs(hour - 13.0) > day_len / 2] = 0.0
            clouds = np.clip(0.75 + 2.0 * _ar1(rng, len(stamps), 0.995, 0.05), 0.1, 1.0)
            values = sun * clouds * (0.6 + 0.4 * (1 - winterness))
            is_gen = True
        elif kind.startswith("WP"):
            wind = np.clip(0.35 + 0.1 * winterness + 3.0 * _ar1(rng, len(stamps), 0.995, 0.03), 0.0, 1.0)
            values = wind ** 2
            is_gen = True
        else:
            raise ValueError(f"unknown profile kind {kind!r}")
        values = np.clip(values, 0.0, None)
        p[kind] = np.round(values, 6)
        q[kind] = np.zeros_like(values) if is_gen else np.round(values * PF_TAN, 6)
    return TimeSeries(timestamps=stamps, p_mw=p, q_mvar=q)


def _ar1(rng: np.random.Generator, n: int, phi: float, sigma: float) -> np.ndarray:
    e = rng.normal(0.0, sigma * math.sqrt(1 - phi**2), n)
    out = np.empty(n)
    acc = 0.0
    for i in range(n):
        acc = phi * acc + e[i]
        out[i] = acc
    return out


def write_bundle(directory: str | Path) -> None:
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    (out / "rural13.json").write_text(json.dumps(rural13(), indent=1) + "\n")
    (out / "rural13_catalog.json").write_text(json.dumps(RURAL_CATALOG, indent=1) + "\n")
    (out / "comm113.json").write_text(json.dumps(comm113(), indent=1) + "\n")
    (out / "comm113_catalog.json").write_text(json.dumps(COMM_CATALOG, indent=1) + "\n")
    write_timeseries(profiles_2016(["L2-A", "H0-A", "H0-B"], seed=2016), out / "rural13_2016.csv.gz")
    write_timeseries(profiles_2016(["G0-A", "G1-B", "H0-L", "PV3", "WP4"], seed=2017), out / "comm113_2016.csv.gz")


if __name__ == "__main__":
    write_bundle(sys.argv[1] if len(sys.argv) > 1 else Path(__file__).parent / "data")
