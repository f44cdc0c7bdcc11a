import json
import shutil

import pandas as pd
import pytest

from gridres import data_path
from gridres.cli import main


@pytest.fixture()
def config(tmp_path):
    for name in ("rural13.json", "rural13_catalog.json", "rural13_2016.csv.gz"):
        shutil.copy(data_path(name), tmp_path / name)
    data = json.loads(data_path("test_case_1.json").read_text())
    data["simulation"].update(end="2016-01-31", scenarios=3)
    data["weather"]["base_rate_per_hour"] = 0.01
    data["nsga2"].update(population=4, generations=2, mc_runs=2)
    path = tmp_path / "run.json"
    path.write_text(json.dumps(data))
    return path


def edit(path, fn):
    data = json.loads(path.read_text())
    fn(data)
    path.write_text(json.dumps(data))


def run(*args):
    return main([str(a) for a in args])


def test_candidates(config, tmp_path):
    assert run("candidates", "--config", config, "--out", tmp_path / "c") == 0
    frame = pd.read_csv(tmp_path / "c" / "candidates.csv")
    assert len(frame) == 13
    manifest = json.loads((tmp_path / "c" / "manifest.json").read_text())
    assert manifest["command"] == "candidates" and manifest["seed"] == 2016
    assert set(manifest["inputs"]) == {"network", "catalog", "timeseries"}
    assert "candidates.csv" in manifest["outputs"]


def test_simulate_is_byte_identical(config, tmp_path):
    assert run("simulate", "--config", config, "--out", tmp_path / "a", "--dump-scenario", "0") == 0
    assert run("simulate", "--config", config, "--out", tmp_path / "b", "--jobs", "2") == 0
    for name in ("kpis.csv", "kpis.json", "kpis_by_subnet.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    kpis = pd.read_csv(tmp_path / "a" / "kpis.csv")
    assert len(kpis) == 12 and (kpis["kind"] == "varying").sum() == 4
    assert (tmp_path / "a" / "scenario_0" / "outages.csv").exists()
    assert run("simulate", "--config", config, "--out", tmp_path / "c", "--seed", "1") == 0
    assert (tmp_path / "a" / "kpis.csv").read_bytes() != (tmp_path / "c" / "kpis.csv").read_bytes()


def test_simulate_refuses_single_scenario(config, tmp_path, capsys):
    assert run("simulate", "--config", config, "--scenarios", "1", "--out", tmp_path / "x") == 2
    assert "at least 2" in capsys.readouterr().err


def test_config_error_exit_code(config, tmp_path, capsys):
    edit(config, lambda d: d["economics"].update(cost_per_kwh=-1))
    assert run("candidates", "--config", config, "--out", tmp_path / "x") == 2
    assert "economics.cost_per_kwh" in capsys.readouterr().err


def test_zero_budget_gives_empty_portfolio(config, tmp_path):
    edit(config, lambda d: d["planning"].update(budget=0))
    for method in ("npv", "nsga2"):
        out = tmp_path / method
        assert run("optimize", "--method", method, "--config", config, "--out", out) == 0
        port = json.loads((out / "portfolio.json").read_text())
        assert port["n_investments"] == 0 and port["investments"] == []
        assert pd.read_csv(out / "schedule.csv").empty


def test_nsga2_then_schedule_and_compare(config, tmp_path):
    out = tmp_path / "ga"
    assert run("optimize", "--method", "nsga2", "--config", config, "--out", out) == 0
    port = json.loads((out / "portfolio.json").read_text())
    assert port["method"] == "nsga2" and port["cost"] <= 20000 and port["scheduler"] == "ilp"
    archive = json.loads((out / "pareto_archive.json").read_text())
    assert archive["archive"] and len(archive["history"]) == 3
    sched = pd.read_csv(out / "schedule.csv")
    gantt = pd.read_csv(out / "gantt.csv")
    assert len(sched) == port["n_investments"]
    assert list(gantt.columns) == ["project", "day", "crew"]
    assert gantt.groupby("day")["crew"].sum().max() <= 14

    assert run("schedule", "--portfolio", out / "portfolio.json", "--scheduler", "fifo", "--config", config,
               "--out", tmp_path / "fifo") == 0
    assert json.loads((tmp_path / "fifo" / "portfolio.json").read_text())["scheduler"] == "fifo"

    cmp = tmp_path / "cmp"
    assert run("compare", out / "portfolio.json", out / "portfolio.json", "--labels", "X,Y", "--config", config,
               "--out", cmp) == 0
    frame = pd.read_csv(cmp / "comparison.csv")
    assert len(frame) == 12
    pd.testing.assert_series_equal(frame["X_median"], frame["Y_median"], check_names=False)
    subnets = pd.read_csv(cmp / "comparison_by_subnet.csv")
    assert len(subnets) == 2 * 3 and set(subnets["portfolio"]) == {"X", "Y"}


def test_infeasible_crew_exit_code(config, tmp_path):
    assert run("optimize", "--method", "npv", "--config", config, "--out", tmp_path / "npv") == 0
    port = json.loads((tmp_path / "npv" / "portfolio.json").read_text())
    assert sorted(inv["line_id"] for inv in port["investments"]) == [5, 7]
    edit(config, lambda d: d["planning"].update(technicians=8))
    assert run("schedule", "--portfolio", tmp_path / "npv" / "portfolio.json", "--config", config,
               "--out", tmp_path / "s") == 3


def test_bad_labels(config, tmp_path):
    empty = tmp_path / "empty.json"
    empty.write_text("{}")
    assert run("compare", empty, empty, "--labels", "A,A", "--config", config) == 2


def test_rerun(config, tmp_path, capsys):
    out = tmp_path / "sim"
    assert run("simulate", "--config", config, "--out", out) == 0
    assert run("rerun", out / "manifest.json", "--out", tmp_path / "again") == 0
    assert "kpis.csv: identical" in capsys.readouterr().out
    with open(tmp_path / "rural13.json", "a") as fh:
        fh.write("\n")
    assert run("rerun", out / "manifest.json", "--out", tmp_path / "changed") == 2
