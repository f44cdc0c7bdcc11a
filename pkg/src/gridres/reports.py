"""CSV and JSON report writers. Floats use a fixed format so reruns are byte-identical."""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any, Mapping, Sequence

import pandas as pd

from .investments import CandidateSet, Investment, Portfolio, Schedule
from .metrics import KPI_ROWS, Stat, SummaryStats
from .nsga2 import NsgaResult

FLOAT_FORMAT = "%.10g"
STAT_FIELDS = ("median", "iqr", "mean", "ci_low", "ci_high", "n")


def _clean(obj: Any) -> Any:
    if isinstance(obj, float):
        return None if math.isnan(obj) or math.isinf(obj) else float(FLOAT_FORMAT % obj)
    if isinstance(obj, Mapping):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if hasattr(obj, "item") and callable(obj.item):
        return _clean(obj.item())
    return obj


def write_json(path: Path, data: Any) -> Path:
    path.write_text(json.dumps(_clean(data), indent=2, sort_keys=True) + "\n")
    return path


def write_csv(path: Path, frame: pd.DataFrame) -> Path:
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return path


def _stat_cols(stat: Stat, prefix: str = "") -> dict[str, Any]:
    return {f"{prefix}{f}": getattr(stat, f) for f in STAT_FIELDS}


def kpi_frame(summary: SummaryStats) -> pd.DataFrame:
    rows = []
    for spec in KPI_ROWS:
        rows.append({"key": spec.key, "metric": spec.label, "unit": spec.unit,
                     "kind": "varying" if spec.varying else "fixed", **_stat_cols(summary[spec.key])})
    return pd.DataFrame(rows)


def subnet_frame(by_subnet: Mapping[str, Stat], portfolio: str | None = None) -> pd.DataFrame:
    rows = []
    for sub in sorted(by_subnet):
        row = {"subnet": sub, "metric": "Cost of total unserved energy", "unit": "$",
               **_stat_cols(by_subnet[sub])}
        if portfolio is not None:
            row = {"portfolio": portfolio, **row}
        rows.append(row)
    return pd.DataFrame(rows)


def write_kpis(out: Path, summary: SummaryStats, by_subnet: Mapping[str, Stat]) -> list[Path]:
    data = {
        "n_scenarios": summary.n_scenarios,
        "confidence": summary.confidence,
        "kpis": {k: s.to_dict() for k, s in summary.stats.items()},
        "units": {spec.key: spec.unit for spec in KPI_ROWS},
        "cost_unserved_by_subnet": {k: s.to_dict() for k, s in by_subnet.items()},
    }
    return [write_json(out / "kpis.json", data),
            write_csv(out / "kpis.csv", kpi_frame(summary)),
            write_csv(out / "kpis_by_subnet.csv", subnet_frame(by_subnet))]


def comparison_frame(summaries: Sequence[tuple[str, SummaryStats]]) -> pd.DataFrame:
    """One row per KPI (4 weather-varying, then 8 fixed), statistics per portfolio in columns."""
    rows = []
    for spec in KPI_ROWS:
        row = {"key": spec.key, "metric": spec.label, "unit": spec.unit,
               "kind": "varying" if spec.varying else "fixed"}
        for label, summary in summaries:
            row.update(_stat_cols(summary[spec.key], f"{label}_"))
        rows.append(row)
    return pd.DataFrame(rows)


def write_comparison(out: Path, summaries: Sequence[tuple[str, SummaryStats]],
                     subnets: Sequence[tuple[str, Mapping[str, Stat]]]) -> list[Path]:
    by_sub = pd.concat([subnet_frame(s, label) for label, s in subnets], ignore_index=True)
    return [write_csv(out / "comparison.csv", comparison_frame(summaries)),
            write_csv(out / "comparison_by_subnet.csv", by_sub)]


def write_portfolio(out: Path, portfolio: Portfolio, schedule: Schedule | None, scheduler: str) -> Path:
    data = portfolio.to_dict()
    data["days_to_complete"] = schedule.makespan if schedule is not None else 0
    data["scheduler"] = scheduler
    return write_json(out / "portfolio.json", data)


def write_schedule(out: Path, schedule: Schedule, investments: Sequence[Investment]) -> list[Path]:
    by_id = {inv.id: inv for inv in investments}
    return [write_csv(out / "schedule.csv", schedule.to_frame(by_id)),
            write_csv(out / "gantt.csv", schedule.gantt_frame())]


def write_candidates(out: Path, candidates: CandidateSet) -> Path:
    return write_csv(out / "candidates.csv", candidates.to_frame())


def write_nsga2(out: Path, result: NsgaResult, candidates: CandidateSet) -> list[Path]:
    rows = []
    for gen, pop in enumerate(result.populations):
        for e in pop:
            rows.append({"generation": gen, "genome": "".join(map(str, e.genome)),
                         "unserved_mwh": e.objectives[0], "losses_mwh": e.objectives[1],
                         "penalty": e.penalty, "cost": e.cost, "feasible": e.feasible})
    archive = {
        "reference_point": list(result.reference),
        "history": [vars(h) for h in result.history],
        "archive": [{"genome": "".join(map(str, e.genome)),
                     "investments": [candidates[i].label for i, b in enumerate(e.genome) if b],
                     "unserved_mwh": e.objectives[0], "losses_mwh": e.objectives[1],
                     "cost": e.cost, "fifo_days": e.days} for e in result.archive],
    }
    return [write_csv(out / "nsga2_generations.csv", pd.DataFrame(rows)),
            write_json(out / "pareto_archive.json", archive)]
