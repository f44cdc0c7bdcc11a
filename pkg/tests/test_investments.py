import math

import numpy as np
import pytest

from gridres.investments import (CandidateSet, Investment, Portfolio, Schedule, enumerate_candidates,
                                 source_adjacent_lines)


def test_rural_candidates(rural):
    net, _ = rural
    cs = enumerate_candidates(net, budget=20000, horizon_days=365, technicians=14)
    assert len(cs) == 13
    for inv in cs.investments:
        ln = net.line(inv.line_id)
        assert inv.kind == ("bury" if ln.overhead else "upgrade")
        assert not inv.conductor.overhead
        assert inv.conductor.max_current >= ln.conductor.max_current
        if inv.kind == "bury":
            assert inv.cost == pytest.approx(inv.conductor.underground_cost_per_km * ln.length)
            assert inv.work_days == max(1, math.ceil(round(inv.conductor.underground_days_per_km * ln.length, 9)))
            assert inv.technicians == inv.conductor.underground_technicians
        else:
            assert inv.conductor.max_current > ln.conductor.max_current
            assert inv.cost == pytest.approx(inv.conductor.upgrade_cost_per_km * ln.length)
    assert sorted(i.line_id for i in cs.investments if i.kind == "bury") == [1, 5, 6, 7]


def test_source_adjacent_filter(comm):
    net, _ = comm
    keep = source_adjacent_lines(net)
    assert {8, 19, 39} <= keep
    cs = enumerate_candidates(net, source_filter=True)
    assert {i.line_id for i in cs.investments} <= keep
    # lines already on the largest cable have no upgrade target
    assert 103 not in {i.line_id for i in cs.investments}
    assert len(enumerate_candidates(net, source_filter=True, exclude_lines=[8])) == len(cs) - 1


def test_genome_mapping(rural):
    net, _ = rural
    cs = enumerate_candidates(net)
    g = cs.genome_of([5, 7])
    assert [i.id for i in cs.selected(g)] == [5, 7]
    assert cs.cost(g) == pytest.approx(cs[5].cost + cs[7].cost)
    with pytest.raises(ValueError, match="genome length"):
        cs.selected([1, 0])
    with pytest.raises(ValueError, match="dense"):
        CandidateSet((cs[1],), 0, 1, 1)


def test_portfolio_round_trip(rural):
    net, _ = rural
    cs = enumerate_candidates(net)
    p = Portfolio((cs[7], cs[5]), method="npv", objectives={"x": 1.0})
    again = Portfolio.from_dict(p.to_dict(), net)
    assert again == p and again.cost == pytest.approx(cs[7].cost + cs[5].cost)
    assert again.line_ids == (7, 5)


def _sched(days, durations=(2, 1), crews=(3, 2), pool=5):
    return Schedule((10, 11), durations, crews, pool, days, weights=(1.0, 2.0))


def test_schedule_accessors():
    s = _sched(((10, 11), (10,)))
    s.check()
    assert s.makespan == 2 and s.completion == {10: 2, 11: 1} and s.start == {10: 1, 11: 1}
    assert s.crew_usage() == [5, 3]
    assert s.weighted_completion() == 1 * 2 + 2 * 1
    assert s.assignment()[1] == {10: (1, 2, 3), 11: (4, 5)}
    assert s.gantt_frame().values.tolist() == [[10, 1, 3], [11, 1, 2], [10, 2, 3]]


@pytest.mark.parametrize("days, message", [
    (((10,), (11,)), "1 active days, needs 2"),
    (((10, 11), (10, 11)), "active days"),
    (((10,), (10,), (11,), (99,)), "unknown project"),
])
def test_schedule_check_rejects(days, message):
    with pytest.raises(ValueError, match=message):
        _sched(days).check()


def test_schedule_check_crew_and_contiguity():
    with pytest.raises(ValueError, match="exceed pool"):
        _sched(((10, 11), (10,)), pool=4).check()
    s = _sched(((10,), (11,), (10,)))
    s.check()
    with pytest.raises(ValueError, match="contiguous"):
        s.check(contiguous=True)
