"""Side-by-side comparison of finished result directories."""

from __future__ import annotations

import math
from pathlib import Path

from .runner import read_csv

EPISODIC_METRICS = {"rmsve", "steps"}
CONTINUING_METRICS = {"rmsre"}
REQUIRED = {"method", "metric", "lambda", "alpha", "final_mean", "final_stderr", "failure_rate"}
COLUMNS = ["method", "metric", "lambda", "alpha", "final_mean", "final_stderr", "failure_rate"]
OFF_POLICY_NOTE = ("# note: continuing runs learn the target policy's values from behavior-policy data "
                   "with uncorrected semi-gradient TD")


class ReportError(ValueError):
    pass


def _family(metric: str) -> str:
    if metric in EPISODIC_METRICS:
        return "episodic"
    if metric in CONTINUING_METRICS:
        return "continuing"
    raise ReportError(f"unknown metric {metric!r}")


def collect(result_dirs) -> list[dict]:
    if not result_dirs:
        raise ReportError("need at least one result directory")
    rows = []
    for d in result_dirs:
        path = Path(d) / "summary.csv"
        if not path.exists():
            raise ReportError(f"{d} has no summary.csv")
        _, summary = read_csv(path)
        for row in summary:
            missing = REQUIRED - row.keys()
            if missing:
                raise ReportError(f"{path} lacks columns {sorted(missing)}")
            rows.append({**row, "source": str(d)})
    families = {_family(r["metric"]) for r in rows}
    if len(families) > 1:
        raise ReportError("cannot compare episodic and continuing metrics in one table")
    if len({r["metric"] for r in rows}) > 1:
        raise ReportError("result directories report different metrics")
    # every metric we produce is an error or a step count: lower is better
    rows.sort(key=lambda r: math.inf if r["final_mean"] == "nan" else float(r["final_mean"]))
    return rows


def format_table(rows: list[dict]) -> str:
    lines = [OFF_POLICY_NOTE] if any(r["metric"] in CONTINUING_METRICS for r in rows) else []
    lines.append(",".join(COLUMNS))
    for r in rows:
        lines.append(",".join(r[c] for c in COLUMNS))
    return "\n".join(lines) + "\n"


def report(result_dirs, out=None) -> str:
    table = format_table(collect(result_dirs))
    if out is not None:
        Path(out).write_text(table, encoding="utf-8")
    return table
