"""Command-line front end.

Every flag can also be set through an environment variable named
``JUMPMESH_<FLAG>`` (dashes become underscores, e.g. ``JUMPMESH_TOL=1e-7``);
explicit flags take precedence.
"""
from __future__ import annotations

import argparse
import logging
import os
import statistics
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .driver import RunConfig, run
from .jumpfun import JumpConfig
from .nlp import SolverOptions
from .problems import PROBLEMS, get_problem
from .records import summary_line, write_outputs

ENV_PREFIX = "JUMPMESH_"
EXIT_OK, EXIT_ERROR, EXIT_NOT_CONVERGED = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def parse_orders(text: str) -> tuple:
    """``"1..6"`` or ``"1,2,4"``."""
    text = text.strip()
    try:
        if ".." in text:
            lo, hi = text.split("..")
            orders = tuple(range(int(lo), int(hi) + 1))
        else:
            orders = tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad order set {text!r}") from None
    if not orders or min(orders) < 1:
        raise argparse.ArgumentTypeError(f"orders must be positive integers, got {text!r}")
    return orders


def float_list(text: str) -> list:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad number list {text!r}") from None


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--problem", required=True, choices=sorted(PROBLEMS))
    p.add_argument("--eta", type=float, default=0.1, help="detection threshold")
    p.add_argument("--orders", type=parse_orders, default=parse_orders("1..6"))
    p.add_argument("--max-iters", type=int, default=20, help="maximum mesh refinement iterations")
    p.add_argument("--initial-intervals", type=int, default=10)
    p.add_argument("--initial-degree", type=int, default=4)
    p.add_argument("--no-jump-detection", action="store_true")
    p.add_argument("--kkt-tol", type=float, default=1e-9)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--repeats", type=int, default=1, help="runs per configuration; median wall time is reported")
    p.add_argument("--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="jumpmesh", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True
    s = sub.add_parser("solve", help="run mesh refinement once")
    _common(s)
    s.add_argument("--tol", type=float, default=1e-6)
    s.add_argument("--mu", type=float, default=1.0, help="safety factor")
    s.add_argument("--out", type=Path)
    s.add_argument("--history", type=Path)
    s.add_argument("--plot-data", type=Path)
    w = sub.add_parser("sweep", help="run a grid of tolerances and safety factors")
    _common(w)
    w.add_argument("--tols", type=float_list, default=float_list("1e-6,1e-7,1e-8"))
    w.add_argument("--mus", type=float_list, default=float_list("1,1.5,2"))
    w.add_argument("--baseline", action="store_true", help="add a no-jump-detection cell per tolerance")
    w.add_argument("--out-dir", type=Path)
    w.add_argument("--workers", type=int, default=1)
    return parser


def _env_value(action: argparse.Action, raw: str):
    if isinstance(action, argparse._StoreTrueAction):
        return raw.strip().lower() in ("1", "true", "yes", "on")
    return action.type(raw) if action.type else raw


def apply_env_defaults(parser: argparse.ArgumentParser, environ=None) -> None:
    """Use ``JUMPMESH_<DEST>`` variables as defaults for every option of every subcommand."""
    environ = os.environ if environ is None else environ
    subparsers = [a for a in parser._actions if isinstance(a, argparse._SubParsersAction)]
    for p in [parser] + [sp for a in subparsers for sp in a.choices.values()]:
        for action in p._actions:
            if not action.option_strings or action.dest == "help":
                continue
            key = ENV_PREFIX + action.dest.upper()
            if key in environ:
                try:
                    action.default = _env_value(action, environ[key])
                except (argparse.ArgumentTypeError, ValueError) as exc:
                    raise UsageError(f"bad value in environment variable {key}: {exc}") from None
                action.required = False


def make_config(args, epsilon: float, safety: float, detect: bool) -> RunConfig:
    return RunConfig(
        epsilon=epsilon,
        max_iterations=args.max_iters,
        initial_intervals=args.initial_intervals,
        initial_degree=args.initial_degree,
        jump=JumpConfig(orders=args.orders, threshold=args.eta, safety=safety),
        solver=SolverOptions(kkt_tolerance=args.kkt_tol),
        detect=detect,
    )


def timed_run(problem_name: str, config: RunConfig, repeats: int):
    """Run ``repeats`` times; return the first result and the median wall time."""
    problem = get_problem(problem_name)
    history, solution = run(problem, config)
    times = [history.wall_time]
    for _ in range(repeats - 1):
        h, _ = run(problem, config)
        times.append(h.wall_time)
    return history, solution, statistics.median(times)


def _format_summary(row: dict) -> str:
    return (f"{row['problem']:>14} eps={row['epsilon']:<8.1e} mu={row['safety']:<4g} "
            f"detect={'yes' if row['detect'] else 'no ':3} converged={'yes' if row['converged'] else 'no ':3} "
            f"M={row['M']:<3d} K={row['K']:<4d} P={row['P']:<5d} nonsmooth={row['nonsmooth']:<2d} "
            f"cost={row['cost']:.10g} time={row['wall_time']:.2f}s")


def cmd_solve(args) -> int:
    config = make_config(args, args.tol, args.mu, not args.no_jump_detection)
    history, solution, median = timed_run(args.problem, config, args.repeats)
    record = write_outputs(history, solution, args.out, args.history, args.plot_data,
                           {"problem": args.problem, "seed": args.seed})
    row = summary_line(history, solution)
    row["wall_time"] = median
    print(_format_summary(row))
    if solution is not None:
        for seg in record["final"]["nonsmooth_segments"]:
            print(f"  bracket [{seg['left']:.6f}, {seg['right']:.6f}] at tau = {seg['bracket_point']:.6f}")
    if history.message:
        print(history.message)
    return EXIT_OK if history.converged else EXIT_NOT_CONVERGED


def cmd_sweep(args) -> int:
    cells = [(eps, mu, True) for eps in args.tols for mu in args.mus]
    if args.baseline:
        cells += [(eps, 1.0, False) for eps in args.tols]
    if args.out_dir:
        args.out_dir.mkdir(parents=True, exist_ok=True)

    def work(cell):
        eps, mu, det = cell
        config = make_config(args, eps, mu, det)
        history, solution, median = timed_run(args.problem, config, args.repeats)
        if args.out_dir:
            stem = f"{args.problem}_eps{eps:g}_" + (f"mu{mu:g}" if det else "nodetect")
            write_outputs(history, solution, args.out_dir / f"{stem}.json", args.out_dir / f"{stem}.csv",
                          extra={"problem": args.problem, "seed": args.seed})
        row = summary_line(history, solution)
        row["wall_time"] = median
        return row

    with ThreadPoolExecutor(max_workers=max(1, args.workers)) as pool:
        rows = list(pool.map(work, cells))
    for row in rows:
        print(_format_summary(row))
    if args.out_dir:
        import csv

        with (args.out_dir / "summary.csv").open("w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)
    return EXIT_OK if all(r["converged"] for r in rows) else EXIT_NOT_CONVERGED


def main(argv=None) -> int:
    parser = build_parser()
    try:
        apply_env_defaults(parser)
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_ERROR
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    np.random.seed(args.seed)
    try:
        if args.repeats < 1:
            raise ValueError("--repeats must be at least 1")
        return cmd_solve(args) if args.command == "solve" else cmd_sweep(args)
    except (ValueError, KeyError, OSError) as exc:
        print(f"jumpmesh: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
