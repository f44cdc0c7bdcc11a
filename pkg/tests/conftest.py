from __future__ import annotations

import numpy as np
import pandas as pd
import pytest

from gridres import data_path
from gridres.grid import (Bus, ConductorType, Generator, Line, Load, Network, TimeSeries, load_network,
                          load_timeseries)

OH = ConductorType("oh", 0.3, 0.3, 0.3, True, asset_value_per_km=50_000.0)
UG = ConductorType("ug", 0.2, 0.08, 0.27, False, asset_value_per_km=100_000.0)
UG_BIG = ConductorType("ug-big", 0.12, 0.08, 0.36, False, upgrade_cost_per_km=40_000.0,
                       upgrade_days_per_km=2.0, upgrade_technicians=4, underground_cost_per_km=150_000.0,
                       underground_days_per_km=6.0, underground_technicians=8, asset_value_per_km=150_000.0)
CATALOG = (OH, UG, UG_BIG)


def random_radial(rng: np.random.Generator, n_bus: int, vn: float = 0.4) -> tuple[Network, np.ndarray]:
    """Random tree with one slack bus and random PQ loads/generation; returns (network, injections)."""
    buses = [Bus(0, vn, 0.0, 0.0, "a")]
    lines = []
    for b in range(1, n_bus):
        parent = int(rng.integers(0, b))
        px, py = buses[parent].x, buses[parent].y
        buses.append(Bus(b, vn, px + rng.uniform(0.05, 0.3), py + rng.uniform(-0.2, 0.2), "a"))
        cond = OH if rng.random() < 0.5 else UG
        lines.append(Line(b - 1, parent, b, float(rng.uniform(0.02, 0.3)), cond))
    loads = tuple(Load(k, b, f"p{k}") for k, b in enumerate(range(1, n_bus)))
    net = Network("random", tuple(buses), tuple(lines), loads, (Generator(0, 0, None, is_slack_connection=True),),
                  catalog=CATALOG)
    inj = np.zeros(n_bus, dtype=complex)
    scale = 0.1 / n_bus  # keeps deep 0.4 kV trees within voltage collapse limits
    inj[1:] = -scale * (rng.uniform(0.0, 1.0, n_bus - 1) + 1j * rng.uniform(0.0, 0.3, n_bus - 1))
    inj[1:] += scale * rng.uniform(0.0, 0.5, n_bus - 1) * (rng.random(n_bus - 1) < 0.2)
    return net, inj


def flat_timeseries(profiles: dict[str, float], days: int = 2, start: str = "2016-01-01") -> TimeSeries:
    stamps = pd.date_range(start, periods=days * 96, freq="15min")
    p = {k: np.full(len(stamps), v) for k, v in profiles.items()}
    q = {k: 0.2 * a for k, a in p.items()}
    return TimeSeries(stamps, p, q)


@pytest.fixture(scope="session")
def rural():
    net = load_network(data_path("rural13.json"), data_path("rural13_catalog.json"))
    return net, load_timeseries(data_path("rural13_2016.csv.gz"), net)


@pytest.fixture(scope="session")
def comm():
    net = load_network(data_path("comm113.json"), data_path("comm113_catalog.json"))
    return net, load_timeseries(data_path("comm113_2016.csv.gz"), net)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
