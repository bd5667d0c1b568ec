from typing import Any, Dict, List, Sequence

import numpy as np
from rich.markup import escape
from rich.panel import Panel
from rich.table import Table

from gzk.lab.core import console
from gzk.models.schemas import ExperimentVerdict, Verdict

_VERDICT_STYLE = {Verdict.PASS: "green", Verdict.FAIL: "red", Verdict.REPORT_ONLY: "yellow"}


def loglog_slope(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Least-squares slope of log(y) against log(x)."""
    slope, _ = np.polyfit(np.log(np.asarray(xs, dtype=float)), np.log(np.asarray(ys, dtype=float)), 1)
    return float(slope)


def decide(checks: Dict[str, bool], report_only: bool = False) -> Verdict:
    if report_only:
        return Verdict.REPORT_ONLY
    return Verdict.PASS if all(checks.values()) else Verdict.FAIL


def _fmt(v: Any) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    return escape(str(v))


def render_table(title: str, rows: List[Dict[str, Any]]) -> None:
    if not rows:
        return
    table = Table(title=title)
    for col in rows[0]:
        table.add_column(str(col), style="cyan")
    for row in rows:
        table.add_row(*(_fmt(v) for v in row.values()))
    console.print(table)


def render_verdict(verdict: ExperimentVerdict) -> None:
    """Pretty-print a verdict: checks, measured numbers and tables."""
    style = _VERDICT_STYLE[verdict.verdict]
    lines = [f"[bold {style}]{verdict.verdict.value.upper()}[/bold {style}]"]
    for name, ok in verdict.checks.items():
        mark = "[green]ok[/green]" if ok else "[red]violated[/red]"
        lines.append(f"  {escape(name)}: {mark}")
    for key, value in verdict.measured.items():
        lines.append(f"  [dim]{escape(key)}[/dim] = {_fmt(value)}")
    for note in verdict.notes:
        lines.append(f"  [italic]{escape(note)}[/italic]")
    console.print(Panel("\n".join(lines), title=f"Experiment: {verdict.experiment}", border_style=style))
    for name, rows in verdict.tables.items():
        render_table(name, rows)
