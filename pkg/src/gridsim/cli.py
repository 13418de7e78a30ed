"""Command-line front end: validate a grid, find its operation point,
simulate a fault and export CSV and SVG."""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from .errors import GridSimError
from .grid import validate, is_valid
from .grid_io import load_powergrid, read_state, write_solution_csv, write_state
from .scenarios import ChangeInitialConditions, parse_perturbation, simulate
from .solver import SolverOptions
from .steady_state import METHODS, find_operationpoint, residual_norm

DEFAULT_SAMPLE = 0.01


def _interval(text: str) -> tuple[float, float]:
    a, sep, b = text.partition(":")
    try:
        if not sep:
            raise ValueError
        t0, t1 = float(a), float(b)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected START:END, got {text!r}") from None
    if not (np.isfinite(t0) and np.isfinite(t1) and t1 > t0):
        raise argparse.ArgumentTypeError(f"need finite START < END, got {text!r}")
    return t0, t1


def _positive(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not value > 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {text!r}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gridsim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a grid file for structural errors")
    p.add_argument("--grid", required=True)

    p = sub.add_parser("op", help="compute and optionally save the operation point")
    p.add_argument("--grid", required=True)
    p.add_argument("--method", choices=METHODS, default="rootfind")
    p.add_argument("--out", help="write the state as JSON")

    p = sub.add_parser("simulate", help="run a fault scenario from the operation point")
    p.add_argument("--grid", required=True)
    p.add_argument("--tspan", required=True, type=_interval, metavar="T0:T1")
    p.add_argument("--fault", metavar="SPEC", help="line-failure:LINE | power-perturbation:NODE:P=V[,Q=V] | set-initial:OWNER:VAR=V[,...]")
    p.add_argument("--fault-window", type=_interval, metavar="TON:TOFF")
    p.add_argument("--from", dest="from_state", metavar="STATE", help="start from a saved state instead of the operation point")
    p.add_argument("--out", metavar="CSV")
    p.add_argument("--plot", metavar="SVG")
    p.add_argument("--sample", type=_positive, default=DEFAULT_SAMPLE, metavar="DT")
    p.add_argument("--rtol", type=_positive, default=SolverOptions.rtol)
    p.add_argument("--atol", type=_positive, default=SolverOptions.atol)
    p.add_argument("--verbose", action="store_true")
    return parser


def _write(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def cmd_validate(args) -> int:
    grid = load_powergrid(args.grid)
    violations = validate(grid)
    for v in violations:
        print(v)
    ok = is_valid(violations)
    if ok:
        print(f"ok: {len(grid.nodes)} nodes, {len(grid.lines)} lines")
    return 0 if ok else 1


def cmd_op(args) -> int:
    grid = load_powergrid(args.grid)
    state = find_operationpoint(grid, args.method)
    print(f"residual {residual_norm(grid, state):.3e}")
    if args.out:
        _write(args.out, write_state(state))
    return 0


def cmd_simulate(args, parser) -> int:
    if args.fault_window is not None and args.fault is None:
        parser.error("--fault-window needs --fault")
    try:
        perturbation = parse_perturbation(args.fault, args.fault_window) if args.fault else ChangeInitialConditions(())
    except ValueError as exc:
        parser.error(str(exc))
    grid = load_powergrid(args.grid)
    if args.from_state:
        with open(args.from_state, encoding="utf-8") as fh:
            x0 = read_state(fh.read(), grid)
    else:
        x0 = find_operationpoint(grid)
    opts = SolverOptions(rtol=args.rtol, atol=args.atol)
    solution = simulate(perturbation, grid, x0, args.tspan, opts)
    if args.verbose:
        print(solution.stats.summary(), file=sys.stderr)
    if args.out:
        _write(args.out, write_solution_csv(solution, args.sample))
    if args.plot:
        # deferred: matplotlib is only needed when a figure is requested
        from .plotting import render_plot_svg

        _write(args.plot, render_plot_svg(solution))
    print(f"simulated {solution.t0:g}..{solution.t1:g} s in {len(solution.segments)} segment(s)")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    if getattr(args, "verbose", False):
        logging.getLogger("gridsim").setLevel(logging.DEBUG)
    try:
        if args.command == "validate":
            return cmd_validate(args)
        if args.command == "op":
            return cmd_op(args)
        return cmd_simulate(args, parser)
    except GridSimError as exc:
        print(f"error [{exc.component}]: {exc}", file=sys.stderr)
    except OSError as exc:
        print(f"error [io]: {exc}", file=sys.stderr)
    except ValueError as exc:
        print(f"error [cli]: {exc}", file=sys.stderr)
    return 1


if __name__ == "__main__":
    sys.exit(main())
