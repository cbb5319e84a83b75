"""Text and CSV renderings of loss reports, search tables and simulation results.

Text reports print losses to 10 significant digits.  CSV files carry the
shortest round-trip representation so they parse back without loss.
Plants are numbered from 1 in both.
"""

from __future__ import annotations

import csv
import io
import math
from typing import Optional, Sequence

from .analysis import DIVERGENT, Branch, LossReport, LossValue, PlantLoss
from .model import Schedule
from .search import SearchResult
from .simulate import SimResult


def fmt(x: LossValue) -> str:
    return "DIVERGENT" if x is DIVERGENT else f"{x:.10g}"


def exact(x: LossValue) -> str:
    return "DIVERGENT" if x is DIVERGENT else repr(float(x))


def parse_value(s: str) -> LossValue:
    return DIVERGENT if s == "DIVERGENT" else float(s)


def _csv(rows: Sequence[Sequence[object]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerows(rows)
    return buf.getvalue()


def _bits(row: Sequence[int]) -> str:
    return "".join(str(v) for v in row)


def loss_report_text(report: LossReport, sched: Schedule) -> str:
    lines = [
        "schedule evaluation",
        f"period T0 = {sched.period}, plants N = {len(sched.alloc)}, channels M = {sum(r[0] for r in sched.alloc)}",
        "",
        f"{'plant':>5}  {'branch':<18}  {'J_ave':>16}   sigma_m, m = 0..{sched.period - 1}",
    ]
    for i, (pl, row) in enumerate(zip(report.per_plant, sched.alloc)):
        lines.append(f"{i + 1:>5}  {pl.branch.value:<18}  {fmt(pl.value):>16}   {' '.join(map(str, row))}")
    lines.append(f"{'total':>5}  {'':<18}  {fmt(report.total):>16}")
    if report.divergent:
        lines.append("")
        lines.append("total loss DIVERGENT: an open-loop unstable plant is never scheduled")
    return "\n".join(lines) + "\n"


def loss_report_csv(report: LossReport, sched: Schedule) -> str:
    rows: list[list[object]] = [["plant", "branch", "j_ave", "sigma"]]
    for i, (pl, row) in enumerate(zip(report.per_plant, sched.alloc)):
        rows.append([i + 1, pl.branch.value, exact(pl.value), _bits(row)])
    rows.append(["total", "", exact(report.total), ""])
    return _csv(rows)


def parse_loss_report_csv(text: str) -> tuple[LossReport, Schedule]:
    records = list(csv.DictReader(io.StringIO(text)))
    plants = [r for r in records if r["plant"] != "total"]
    total = next(r for r in records if r["plant"] == "total")
    per = tuple(PlantLoss(parse_value(r["j_ave"]), Branch(r["branch"])) for r in plants)
    sched = Schedule.from_rows([[int(c) for c in r["sigma"]] for r in plants])
    return LossReport(per, parse_value(total["j_ave"])), sched


def search_table_text(rows: Sequence[tuple[int, SearchResult]], method: str,
                      best_period: Optional[int]) -> str:
    width = max(T0 for T0, _ in rows)
    head = " ".join(f"{m:>2}" for m in range(width))
    lines = [
        f"optimal periodic schedules ({method})",
        "",
        f"{'T0':>4}  {'plant':>5}  {head}  {'total J_ave':>16}",
    ]
    for T0, res in rows:
        mark = " *" if T0 == best_period else ""
        for i, row in enumerate(res.best_schedule.alloc):
            cells = " ".join(f"{v:>2}" for v in row) + "   " * (width - T0)
            label = f"{T0:>4}" if i == 0 else " " * 4
            loss = f"{fmt(res.best_loss):>16}{mark}" if i == 0 else ""
            lines.append(f"{label}  {i + 1:>5}  {cells}  {loss}".rstrip())
        lines.append("")
    if best_period is not None:
        lines.append(f"* minimizing period: T0 = {best_period}")
    return "\n".join(lines) + "\n"


def search_table_csv(rows: Sequence[tuple[int, SearchResult]], method: str,
                     best_period: Optional[int]) -> str:
    out: list[list[object]] = [["period", "plant", "sigma", "total_loss", "is_min", "method", "evaluations"]]
    for T0, res in rows:
        for i, row in enumerate(res.best_schedule.alloc):
            out.append([T0, i + 1, _bits(row), exact(res.best_loss), int(T0 == best_period),
                        method, res.evaluations])
    return _csv(out)


def parse_search_table_csv(text: str) -> dict[int, tuple[Schedule, LossValue, bool]]:
    grouped: dict[int, list[dict]] = {}
    for r in csv.DictReader(io.StringIO(text)):
        grouped.setdefault(int(r["period"]), []).append(r)
    return {
        T0: (Schedule.from_rows([[int(c) for c in r["sigma"]] for r in rs]),
             parse_value(rs[0]["total_loss"]), rs[0]["is_min"] == "1")
        for T0, rs in grouped.items()
    }


def _gap(sim: float, analytic: LossValue) -> LossValue:
    if analytic is DIVERGENT or analytic == 0:
        return DIVERGENT if analytic is DIVERGENT else (0.0 if sim == 0 else math.inf)
    return abs(sim - analytic) / analytic


def sim_report_text(res: SimResult, analytic: LossReport, horizon: int, runs: int, seed: int) -> str:
    lines = [
        "closed-loop simulation vs analytic average loss",
        f"runs = {runs}, horizon T = {horizon}, seed = {seed}",
        "",
        f"{'plant':>5}  {'simulated':>16}  {'stderr':>16}  {'analytic':>16}  {'rel_gap':>12}",
    ]
    for i, (m, e, pl) in enumerate(zip(res.per_plant_avg_loss, res.stderr, analytic.per_plant)):
        lines.append(f"{i + 1:>5}  {fmt(m):>16}  {fmt(e):>16}  {fmt(pl.value):>16}  {fmt(_gap(m, pl.value)):>12}")
    lines.append(f"{'total':>5}  {fmt(res.total_avg_loss):>16}  {'':>16}  {fmt(analytic.total):>16}  "
                 f"{fmt(_gap(res.total_avg_loss, analytic.total)):>12}")
    return "\n".join(lines) + "\n"


def sim_report_csv(res: SimResult, analytic: LossReport) -> str:
    rows: list[list[object]] = [["plant", "simulated", "stderr", "analytic", "rel_gap"]]
    for i, (m, e, pl) in enumerate(zip(res.per_plant_avg_loss, res.stderr, analytic.per_plant)):
        rows.append([i + 1, exact(m), exact(e), exact(pl.value), exact(_gap(m, pl.value))])
    rows.append(["total", exact(res.total_avg_loss), "", exact(analytic.total),
                 exact(_gap(res.total_avg_loss, analytic.total))])
    return _csv(rows)


def parse_sim_csv(text: str) -> tuple[SimResult, tuple[LossValue, ...]]:
    records = list(csv.DictReader(io.StringIO(text)))
    plants = [r for r in records if r["plant"] != "total"]
    total = next(r for r in records if r["plant"] == "total")
    res = SimResult(tuple(float(r["simulated"]) for r in plants), float(total["simulated"]),
                    tuple(float(r["stderr"]) for r in plants))
    return res, tuple(parse_value(r["analytic"]) for r in plants)
