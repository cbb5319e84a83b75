"""Command-line interface.

Exit codes: 0 success, 2 usage error, 3 invalid input (files, instance,
schedule), 4 numerical failure (Riccati iteration did not converge),
5 search budget exceeded.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import report
from .analysis import ScheduleEvaluator
from .model import ModelError, dumps, instance_to_dict, load_instance, load_schedule, random_instance, save_instance, validate_schedule
from .riccati import NumericalError
from .search import DEFAULT_EVAL_CAP, MctsConfig, SearchSpaceTooLarge, exhaustive_search, mcts_search, sweep
from .simulate import SimConfig, run_closed_loop

DEFAULT_SEED = 2022

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INVALID = 3
EXIT_NUMERICAL = 4
EXIT_BUDGET = 5


def parse_periods(text: str) -> list[int]:
    try:
        if ".." in text:
            lo, hi = (int(s) for s in text.split("..", 1))
        else:
            lo = hi = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected K or A..B, got {text!r}") from None
    if lo < 1 or hi < lo:
        raise argparse.ArgumentTypeError(f"bad period range {text!r}")
    return list(range(lo, hi + 1))


def _emit(text: str, csv_text: Optional[str], out: Optional[str]) -> None:
    sys.stdout.write(text)
    if out is None:
        return
    path = Path(out)
    csv_path = path.with_suffix(".csv")
    if csv_path == path:
        path = path.with_suffix(".txt")
    path.write_text(text, encoding="utf-8", newline="\n")
    if csv_text is not None:
        csv_path.write_text(csv_text, encoding="utf-8", newline="\n")


def _load_pair(args):
    inst = load_instance(args.instance)
    sched = load_schedule(args.schedule)
    try:
        validate_schedule(inst, sched)
    except ModelError as exc:
        exc.path = args.schedule
        raise
    return inst, sched


def cmd_evaluate(args) -> int:
    inst, sched = _load_pair(args)
    rep = ScheduleEvaluator(inst).report(sched)
    _emit(report.loss_report_text(rep, sched), report.loss_report_csv(rep, sched), args.out)
    return EXIT_OK


def _mcts_cfg(args) -> MctsConfig:
    return MctsConfig(iterations=args.iterations, c_uct=args.c_uct, seed=args.seed)


def cmd_exhaustive(args) -> int:
    inst = load_instance(args.instance)
    res = exhaustive_search(inst, args.period, args.eval_cap)
    rows = [(args.period, res)]
    _emit(report.search_table_text(rows, "exhaustive", args.period),
          report.search_table_csv(rows, "exhaustive", args.period), args.out)
    return EXIT_OK


def cmd_mcts(args) -> int:
    inst = load_instance(args.instance)
    res = mcts_search(inst, args.period, _mcts_cfg(args))
    rows = [(args.period, res)]
    _emit(report.search_table_text(rows, "mcts", args.period),
          report.search_table_csv(rows, "mcts", args.period), args.out)
    return EXIT_OK


def cmd_sweep(args) -> int:
    inst = load_instance(args.instance)
    res = sweep(inst, args.periods, args.method, _mcts_cfg(args), args.eval_cap)
    _emit(report.search_table_text(res.rows, args.method, res.best_period),
          report.search_table_csv(res.rows, args.method, res.best_period), args.out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    inst, sched = _load_pair(args)
    evaluator = ScheduleEvaluator(inst)
    horizon = args.horizon or 200 * sched.period
    cfg = SimConfig(horizon=horizon, runs=args.runs, seed=args.seed, gains=args.gains)
    res = run_closed_loop(inst, sched, evaluator.steady, cfg)
    analytic = evaluator.report(sched)
    _emit(report.sim_report_text(res, analytic, horizon, args.runs, args.seed),
          report.sim_report_csv(res, analytic), args.out)
    return EXIT_OK


def cmd_gen_instance(args) -> int:
    inst = random_instance(args.plants, args.channels, args.n, args.m, args.p, args.seed)
    if args.out is None:
        sys.stdout.write(dumps(instance_to_dict(inst)))
    else:
        save_instance(inst, args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ncsched", description="Periodic scheduling of LQG loops over shared channels.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, schedule=False):
        p.add_argument("--instance", required=True, metavar="PATH")
        if schedule:
            p.add_argument("--schedule", required=True, metavar="PATH")
        p.add_argument("--out", metavar="PATH", help="text report; a .csv sibling is written alongside")
        p.add_argument("--seed", type=int, default=DEFAULT_SEED)

    def mcts_opts(p):
        p.add_argument("--iterations", type=int, default=40_000)
        p.add_argument("--c-uct", type=float, default=1.2)

    p = sub.add_parser("evaluate", help="average loss of a schedule")
    common(p, schedule=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("exhaustive", help="exhaustive search for one period")
    common(p)
    p.add_argument("--period", type=int, required=True)
    p.add_argument("--eval-cap", type=int, default=DEFAULT_EVAL_CAP)
    p.set_defaults(func=cmd_exhaustive)

    p = sub.add_parser("mcts", help="Monte Carlo tree search for one period")
    common(p)
    p.add_argument("--period", type=int, required=True)
    mcts_opts(p)
    p.set_defaults(func=cmd_mcts)

    p = sub.add_parser("sweep", help="best schedule for each period in a range")
    common(p)
    p.add_argument("--periods", type=parse_periods, required=True, metavar="A..B")
    p.add_argument("--method", choices=("exhaustive", "mcts"), default="exhaustive")
    p.add_argument("--eval-cap", type=int, default=DEFAULT_EVAL_CAP)
    mcts_opts(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("simulate", help="Monte Carlo closed-loop check against the analytic loss")
    common(p, schedule=True)
    p.add_argument("--runs", type=int, default=500)
    p.add_argument("--horizon", type=int, default=None, help="default 200*T0")
    p.add_argument("--gains", choices=("steady", "transient"), default="steady")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("gen-instance", help="random instance with Uni(0,1) entries")
    p.add_argument("--plants", "-N", type=int, required=True)
    p.add_argument("--channels", "-M", type=int, required=True)
    p.add_argument("--n", type=int, default=2)
    p.add_argument("--m", type=int, default=1)
    p.add_argument("--p", type=int, default=1)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--out", metavar="PATH")
    p.set_defaults(func=cmd_gen_instance)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ModelError, OSError, json.JSONDecodeError) as exc:
        where = f"{exc.path}: " if getattr(exc, "path", None) else ""
        print(f"error: {where}{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NumericalError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except SearchSpaceTooLarge as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
