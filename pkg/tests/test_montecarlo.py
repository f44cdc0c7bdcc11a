import numpy as np
import pandas as pd
import pytest

from gridres.metrics import EconParams, aggregate
from gridres.montecarlo import run_monte_carlo
from gridres.parallel import parallel_map
from gridres.reports import comparison_frame, kpi_frame, write_kpis
from gridres.weather import WeatherConfig

ECON = EconParams(0.2, 5.0)


def _square(ctx, x):
    return ctx * x * x


def test_parallel_map_keeps_order():
    items = list(range(20))
    assert parallel_map(_square, 3, items, jobs=3) == [3 * x * x for x in items]
    assert parallel_map(_square, 3, [], jobs=3) == []


def test_monte_carlo_independent_of_workers(rural):
    net, ts = rural
    span = ts.span_of("2016-01-01", "2016-01-31")
    a = run_monte_carlo(net, ts, WeatherConfig(0.01), ECON, 4, 5, span, jobs=1)
    b = run_monte_carlo(net, ts, WeatherConfig(0.01), ECON, 4, 5, span, jobs=2)
    assert [r.cost_unserved for r in a.reports] == [r.cost_unserved for r in b.reports]
    assert a.scenario(2).total_unserved_mwh * 1000 * 5.0 == pytest.approx(a.reports[2].cost_unserved, rel=1e-12)
    assert len({r.cost_unserved for r in a.reports}) > 1


def test_report_tables(tmp_path, rural):
    net, ts = rural
    run = run_monte_carlo(net, ts, WeatherConfig(0.01), ECON, 3, 1, (0, 96 * 10))
    summary = aggregate(run.reports)
    frame = kpi_frame(summary)
    assert len(frame) == 12 and list(frame.columns[:4]) == ["key", "metric", "unit", "kind"]
    cmp = comparison_frame([("A", summary), ("B", summary)])
    assert np.allclose(cmp["A_mean"], cmp["B_mean"])
    write_kpis(tmp_path, summary, {"feeder1": summary["cost_unserved"]})
    again = pd.read_csv(tmp_path / "kpis.csv")
    assert again["mean"].iloc[0] == float("%.10g" % summary["cost_unserved"].mean)
