"""Command-line entry point: ``gridres <command> --config run.json``.

Exit codes: 0 success, 2 configuration or input error, 3 infeasible plan,
4 runtime failure. Every command writes ``manifest.json`` next to its
reports; ``gridres rerun <manifest>`` repeats the run bit for bit.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import platform
import sys
from pathlib import Path
from typing import Any, Callable

import numpy as np
import pandas as pd
import scipy

from . import __version__
from .config import ConfigError, RunConfig, load_config, parse_config
from .grid import Network, NetworkError, TimeSeries, apply_investments, load_network, load_timeseries
from .ilp import ScheduleModel, ScheduleTooLarge, marginal_benefits, solve_schedule
from .investments import CandidateSet, InfeasibleError, Portfolio, Schedule, enumerate_candidates
from .metrics import aggregate, deaverage_by_subnet
from .montecarlo import run_monte_carlo
from .npv import OutageAssumption, assess_all, assessments_frame, fifo_schedule, mark_selection, rank_and_select
from .nsga2 import TwinEvaluator, optimize
from .reports import (write_candidates, write_comparison, write_csv, write_json, write_kpis, write_nsga2,
                      write_portfolio, write_schedule)
from .twin import write_scenario_dump

log = logging.getLogger("gridres")

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_RUNTIME = 0, 2, 3, 4


class Context:
    """Config plus the network and time series it points to."""

    def __init__(self, cfg: RunConfig, jobs: int):
        self.cfg = cfg
        self.jobs = jobs
        self.network: Network = load_network(cfg.network_file, cfg.catalog_file)
        self.timeseries: TimeSeries = load_timeseries(cfg.timeseries_file, self.network)
        sim = cfg.model.simulation
        self.span = self.timeseries.span_of(sim.start, sim.end)

    def candidates(self) -> CandidateSet:
        p = self.cfg.model.planning
        return enumerate_candidates(self.network, source_filter=p.candidate_filter == "source_adjacent",
                                    budget=p.budget, horizon_days=p.horizon_days, technicians=p.technicians,
                                    exclude_lines=p.exclude_lines)

    def portfolio(self, data: dict | None) -> tuple[Portfolio, int]:
        if not data:
            return Portfolio((), method="none"), 0
        try:
            port = Portfolio.from_dict(data, self.network)
            apply_investments(self.network, port.investments)
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"portfolio does not match this network: {exc}") from None
        return port, int(data.get("days_to_complete", 0))


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _read_json(path: str | Path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None


# ---------------------------------------------------------------------------
# Commands. Each takes (context, recorded args, output dir) and returns the files written.
# ---------------------------------------------------------------------------

def cmd_simulate(ctx: Context, args: dict, out: Path) -> list[Path]:
    cfg = ctx.cfg
    n = args.get("scenarios") or cfg.model.simulation.scenarios
    if n < 2:
        raise ConfigError("scenarios: at least 2 scenarios are needed for confidence intervals")
    port, days = ctx.portfolio(args.get("portfolio"))
    net = apply_investments(ctx.network, port.investments)
    log.info("simulating %d scenarios, portfolio of %d investments", n, len(port))
    mc = run_monte_carlo(net, ctx.timeseries, cfg.weather, cfg.econ, n, cfg.seed, ctx.span,
                         portfolio_cost=port.cost, n_investments=len(port), days_to_complete=days, jobs=ctx.jobs)
    reports = mc.reports
    if len(reports) < 2:
        raise RuntimeError("fewer than 2 valid scenarios")
    summary = aggregate(reports, cfg.model.simulation.confidence)
    files = write_kpis(out, summary, deaverage_by_subnet(reports, net, cfg.model.simulation.confidence))
    dump = args.get("dump_scenario")
    if dump is not None:
        d = out / f"scenario_{dump}"
        write_scenario_dump(mc.scenario(int(dump)), d)
        files += [d / "outages.csv", d / "steps.csv"]
    return files


def _ilp_schedule(ctx: Context, port: Portfolio) -> tuple[Schedule, str]:
    cfg = ctx.cfg
    pool = cfg.model.planning.technicians
    if not len(port):
        return fifo_schedule(port, pool), "ilp"
    for inv in port.investments:
        if inv.technicians > pool:
            raise InfeasibleError(f"investment {inv.id} ({inv.label}) needs {inv.technicians} technicians, "
                                  f"pool is {pool}")
    runs = cfg.model.schedule.marginal_mc_runs or cfg.model.nsga2.mc_runs
    weights = marginal_benefits(port, ctx.network, ctx.timeseries, cfg.weather, cfg.econ, runs, cfg.seed,
                                ctx.span, jobs=ctx.jobs)
    model = ScheduleModel.from_investments(port.investments, pool, weights)
    try:
        sched = solve_schedule(model, contiguous=cfg.model.schedule.contiguous)
    except ScheduleTooLarge as exc:
        log.warning("%s; falling back to FIFO", exc)
        return fifo_schedule(port, pool), "fifo"
    if not sched.optimal:
        log.warning("schedule search hit its node limit; the schedule is the best found, not proven optimal")
    return sched, "ilp"


def cmd_optimize(ctx: Context, args: dict, out: Path) -> list[Path]:
    cfg = ctx.cfg
    cands = ctx.candidates()
    files = [write_candidates(out, cands)]
    pool = cfg.model.planning.technicians
    if args["method"] == "npv":
        p = cfg.model.planning
        outage = OutageAssumption(pd.Timestamp(p.outage_date), p.outage_hours)
        log.info("assessing NPV of %d candidates", len(cands))
        assessments = assess_all(cands.investments, ctx.network, ctx.timeseries, cfg.econ, outage, ctx.jobs)
        port = rank_and_select(assessments, cands.investments, cands.budget)
        files.append(write_csv(out / "npv_assessment.csv", assessments_frame(mark_selection(assessments, port))))
        sched, scheduler = fifo_schedule(port, pool), "fifo"
    else:
        ga = cfg.ga()
        evaluator = TwinEvaluator(cands, ctx.network, ctx.timeseries, cfg.weather, ga.mc_runs, cfg.seed,
                                  ctx.span, jobs=ctx.jobs)
        log.info("NSGA-II: population %d, %d generations, %d runs per candidate",
                 ga.population, ga.generations, ga.mc_runs)
        result, port = optimize(ga, cands, evaluator)
        files += write_nsga2(out, result, cands)
        sched, scheduler = _ilp_schedule(ctx, port)
    if not len(port):
        log.warning("no feasible investment found; writing an empty portfolio")
    files.append(write_portfolio(out, port, sched, scheduler))
    files += write_schedule(out, sched, port.investments)
    return files


def cmd_schedule(ctx: Context, args: dict, out: Path) -> list[Path]:
    port, _ = ctx.portfolio(args["portfolio"])
    if args.get("scheduler") == "fifo":
        sched, scheduler = fifo_schedule(port, ctx.cfg.model.planning.technicians), "fifo"
    else:
        sched, scheduler = _ilp_schedule(ctx, port)
    return [write_portfolio(out, port, sched, scheduler)] + write_schedule(out, sched, port.investments)


def cmd_compare(ctx: Context, args: dict, out: Path) -> list[Path]:
    cfg = ctx.cfg
    n = args.get("scenarios") or cfg.model.simulation.scenarios
    if n < 2:
        raise ConfigError("scenarios: at least 2 scenarios are needed for confidence intervals")
    conf = cfg.model.simulation.confidence
    summaries, subnets = [], []
    for label, data in zip(args["labels"], (args["portfolio_a"], args["portfolio_b"])):
        port, days = ctx.portfolio(data)
        net = apply_investments(ctx.network, port.investments)
        log.info("evaluating portfolio %s (%d investments) over %d scenarios", label, len(port), n)
        mc = run_monte_carlo(net, ctx.timeseries, cfg.weather, cfg.econ, n, cfg.seed, ctx.span,
                             portfolio_cost=port.cost, n_investments=len(port), days_to_complete=days,
                             jobs=ctx.jobs)
        summaries.append((label, aggregate(mc.reports, conf)))
        subnets.append((label, deaverage_by_subnet(mc.reports, net, conf)))
    return write_comparison(out, summaries, subnets)


def cmd_candidates(ctx: Context, args: dict, out: Path) -> list[Path]:
    return [write_candidates(out, ctx.candidates())]


COMMANDS: dict[str, Callable[[Context, dict, Path], list[Path]]] = {
    "simulate": cmd_simulate,
    "optimize": cmd_optimize,
    "schedule": cmd_schedule,
    "compare": cmd_compare,
    "candidates": cmd_candidates,
}


# ---------------------------------------------------------------------------
# Manifest
# ---------------------------------------------------------------------------

def _versions() -> dict[str, str]:
    return {"gridres": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "pandas": pd.__version__}


def execute(command: str, cfg: RunConfig, args: dict, out: Path, jobs: int) -> dict:
    """Run one command into ``out`` and write its manifest."""
    out.mkdir(parents=True, exist_ok=True)
    ctx = Context(cfg, jobs)
    files = COMMANDS[command](ctx, args, out)
    manifest = {
        "command": command,
        "args": args,
        "config": cfg.to_dict(),
        "config_sha256": cfg.sha256(),
        "seed": cfg.seed,
        "versions": _versions(),
        "inputs": {key: {"path": str(cfg.path(key).resolve()), "sha256": _sha256(cfg.path(key))}
                   for key in ("network", "catalog", "timeseries")},
        "outputs": {str(p.relative_to(out)): _sha256(p) for p in files},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def rerun(manifest_path: Path, out: Path, jobs: int) -> bool:
    """Repeat a recorded run into ``out``; True when every output hash matches."""
    manifest = _read_json(manifest_path)
    try:
        cfg = parse_config(manifest["config"], manifest_path.parent, str(manifest_path))
        command, args, expected = manifest["command"], manifest["args"], manifest["outputs"]
    except KeyError as exc:
        raise ConfigError(f"{manifest_path}: manifest missing {exc}") from None
    for key, rec in manifest.get("inputs", {}).items():
        if _sha256(cfg.path(key)) != rec["sha256"]:
            raise ConfigError(f"input {key} changed since the run: {cfg.path(key)}")
    new = execute(command, cfg, args, out, jobs)
    same = new["outputs"] == expected
    for name, digest in expected.items():
        status = "identical" if new["outputs"].get(name) == digest else "DIFFERENT"
        print(f"{name}: {status}")
    return same


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gridres", description="Resilience investment planning on a grid twin.")
    parser.add_argument("-v", "--verbose", action="store_true", help="progress logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, config: bool = True) -> None:
        if config:
            p.add_argument("--config", required=True, help="run configuration JSON")
            p.add_argument("--seed", type=int, help="override the master seed")
        p.add_argument("--jobs", type=int, default=1, help="worker processes (0: all CPUs)")
        p.add_argument("--out", help="output directory")

    p = sub.add_parser("simulate", help="Monte Carlo KPIs for the grid, optionally with a portfolio")
    common(p)
    p.add_argument("--portfolio", help="portfolio.json to apply")
    p.add_argument("--scenarios", type=int, help="override the scenario count")
    p.add_argument("--dump-scenario", type=int, help="also dump outages and step series of this scenario")

    p = sub.add_parser("optimize", help="select a portfolio and schedule it")
    common(p)
    p.add_argument("--method", choices=("npv", "nsga2"), required=True)

    p = sub.add_parser("schedule", help="schedule an existing portfolio")
    common(p)
    p.add_argument("--portfolio", required=True)
    p.add_argument("--scheduler", choices=("ilp", "fifo"), default="ilp")

    p = sub.add_parser("compare", help="evaluate two portfolios on identical scenarios")
    common(p)
    p.add_argument("portfolio_a")
    p.add_argument("portfolio_b")
    p.add_argument("--labels", default="A,B", help="comma-separated column labels")
    p.add_argument("--scenarios", type=int, help="override the scenario count")

    p = sub.add_parser("candidates", help="list candidate investments")
    common(p)

    p = sub.add_parser("rerun", help="repeat a run from its manifest and check outputs match")
    p.add_argument("manifest")
    common(p, config=False)
    return parser


def _record_args(ns: argparse.Namespace) -> dict[str, Any]:
    if ns.command == "simulate":
        return {"portfolio": _read_json(ns.portfolio) if ns.portfolio else None,
                "scenarios": ns.scenarios, "dump_scenario": ns.dump_scenario}
    if ns.command == "optimize":
        return {"method": ns.method}
    if ns.command == "schedule":
        return {"portfolio": _read_json(ns.portfolio), "scheduler": ns.scheduler}
    if ns.command == "compare":
        labels = [s.strip() for s in ns.labels.split(",")]
        if len(labels) != 2 or len(set(labels)) != 2 or not all(labels):
            raise ConfigError("--labels needs two distinct names")
        return {"portfolio_a": _read_json(ns.portfolio_a), "portfolio_b": _read_json(ns.portfolio_b),
                "labels": labels, "scenarios": ns.scenarios}
    return {}


def main(argv: list[str] | None = None) -> int:
    ns = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if ns.command == "rerun":
            manifest = Path(ns.manifest)
            out = Path(ns.out) if ns.out else manifest.parent.with_name(manifest.parent.name + "-rerun")
            return EXIT_OK if rerun(manifest, out, ns.jobs) else EXIT_RUNTIME
        cfg = load_config(ns.config).with_seed(ns.seed)
        args = _record_args(ns)
        if ns.out:
            out = Path(ns.out)
        elif cfg.output_dir is not None:
            out = cfg.output_dir / ns.command
        else:
            out = Path("gridres-out") / cfg.name / ns.command
        execute(ns.command, cfg, args, out, ns.jobs)
        print(f"wrote {out}")
        return EXIT_OK
    except (ConfigError, NetworkError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InfeasibleError, ScheduleTooLarge) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except Exception as exc:  # noqa: BLE001 - report any failure with the runtime exit code
        log.debug("failure", exc_info=True)
        print(f"failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
