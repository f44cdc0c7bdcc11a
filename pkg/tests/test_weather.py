import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from gridres.grid import Line
from gridres.weather import (WeatherConfig, day_part_of, event_rate, event_rates, lines_in_impact_area,
                             repair_time, sample_event, sample_line_outages, season_of, segment_distances)

from conftest import OH, UG

CFG = WeatherConfig(0.0005, seasonal={"winter": 2.0, "spring": 1.0, "summer": 1.5, "fall": 1.2},
                    hourly={"night": 0.5, "morning": 1.0, "afternoon": 1.5, "evening": 1.2})


def test_buckets():
    assert list(season_of(np.arange(1, 13))) == [0, 0, 1, 1, 1, 2, 2, 2, 3, 3, 3, 0]
    assert list(day_part_of([0, 5, 6, 11, 12, 17, 18, 23])) == [0, 0, 1, 1, 2, 2, 3, 3]


def test_rate_is_product_of_multipliers():
    assert event_rate("2016-01-10 03:00", CFG) == pytest.approx(0.0005 * 2.0 * 0.5 * 0.25, rel=1e-15)
    assert event_rate("2016-07-10 14:45", CFG, 1.0) == pytest.approx(0.0005 * 1.5 * 1.5, rel=1e-15)
    rates = event_rates(np.array([12, 4]), np.array([19, 7]), CFG)
    np.testing.assert_allclose(rates, [0.0005 * 2.0 * 1.2 * 0.25, 0.0005 * 1.0 * 1.0 * 0.25])


@pytest.mark.parametrize("kwargs, message", [
    ({"base_rate_per_hour": -0.1}, "base_rate"),
    ({"base_rate_per_hour": 0.1, "radius_range": (3.0, 1.0)}, "radius"),
    ({"base_rate_per_hour": 0.1, "seasonal": {"winter": 1.0}}, "seasonal"),
    ({"base_rate_per_hour": 0.1, "outage_probability": {"overhead": 1.5, "underground": 0.0}}, "probability"),
])
def test_config_validation(kwargs, message):
    with pytest.raises(ValueError, match=message):
        WeatherConfig(**kwargs)


def _dense_distance(seg, point, n=20001):
    t = np.linspace(0.0, 1.0, n)
    xs = seg[0] + t * (seg[2] - seg[0])
    ys = seg[1] + t * (seg[3] - seg[1])
    return np.hypot(xs - point[0], ys - point[1]).min()


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=6, max_size=6))
def test_segment_distance_matches_dense_sampling(vals):
    seg = np.array([vals[:4]])
    point = (vals[4], vals[5])
    got = segment_distances(seg, point)[0]
    length = np.hypot(seg[0, 2] - seg[0, 0], seg[0, 3] - seg[0, 1])
    dense = _dense_distance(seg[0], point)
    assert got <= dense + 1e-12
    assert dense - got <= length / 20000 + 1e-12


def test_zero_length_segment():
    assert segment_distances(np.array([[1.0, 1.0, 1.0, 1.0]]), (4.0, 5.0))[0] == pytest.approx(5.0)


def test_footprint_uniform_in_bounds():
    rng = np.random.default_rng(0)
    bounds = (0.0, 2.0, -1.0, 3.0)
    ev = [sample_event(rng, CFG, bounds, "2016-01-01") for _ in range(4000)]
    cx = np.array([e.center[0] for e in ev])
    cy = np.array([e.center[1] for e in ev])
    r = np.array([e.radius for e in ev])
    d = np.array([e.duration for e in ev])
    for sample, lo, hi in ((cx, 0, 2), (cy, -1, 3), (r, 0.5, 3.0), (d, 2.0, 8.0)):
        assert stats.kstest(sample, "uniform", args=(lo, hi - lo)).pvalue > 1e-3
    assert ev[0].end == ev[0].start + pd.Timedelta(hours=ev[0].duration)


def test_impact_area_selects_touching_lines(rural):
    net, _ = rural
    ev = sample_event(np.random.default_rng(1), CFG, net.bounds, "2016-01-01")
    hit = lines_in_impact_area(net, ev)
    for k, ln in enumerate(net.lines):
        assert (ln.id in hit) == (_dense_distance(net.line_segments[k], ev.center) <= ev.radius + 1e-6)


def test_outage_frequency_and_repair_time():
    rng = np.random.default_rng(4)
    lines = [Line(k, 0, 1, 0.2, OH if k % 2 == 0 else UG) for k in range(10)]
    ev = sample_event(rng, CFG, (0, 1, 0, 1), "2016-05-01 12:00")
    trials = 20000
    counts = np.zeros(10)
    for _ in range(trials):
        for o in sample_line_outages(rng, lines, CFG, ev):
            counts[o.line_id] += 1
    oh, ug = counts[::2].sum() / (5 * trials), counts[1::2].sum() / (5 * trials)
    assert abs(oh - 0.4) < 3 * np.sqrt(0.4 * 0.6 / (5 * trials))
    assert abs(ug - 0.05) < 3 * np.sqrt(0.05 * 0.95 / (5 * trials))
    assert repair_time(lines[0], CFG) == pytest.approx(0.2 * 0.5 * 24)
    assert repair_time(lines[1], CFG) == pytest.approx(0.2 * 5.0 * 24)
    out = sample_line_outages(np.random.default_rng(0), [lines[0]], WeatherConfig(0.1, outage_probability={
        "overhead": 1.0, "underground": 0.0}), ev)
    assert out[0].restored == ev.end + pd.Timedelta(hours=0.2 * 0.5 * 24)


def test_one_draw_per_candidate_regardless_of_type():
    ev = sample_event(np.random.default_rng(0), CFG, (0, 1, 0, 1), "2016-05-01")
    a = [Line(k, 0, 1, 0.1, OH) for k in range(6)]
    b = [Line(k, 0, 1, 0.1, UG if k < 3 else OH) for k in range(6)]
    ra, rb = np.random.default_rng(9), np.random.default_rng(9)
    sample_line_outages(ra, a, CFG, ev, unavailable={1})
    sample_line_outages(rb, b, CFG, ev)
    assert ra.random() == rb.random()
