"""Command line entry point: ``relayauction {run,sweep,thresholds,verify}``.

Exit status: 0 converged (and every applicable check passed), 1 output
could not be written, 2 dynamics did not converge, 3 invalid input, 4 an
oracle disagreed with the closed-form results.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .channel import ScenarioError
from .config import load_scenario
from .experiment import (
    CHECKS,
    EXIT_DISAGREEMENT,
    EXIT_INVALID,
    EXIT_IO,
    EXIT_NOT_CONVERGED,
    EXIT_OK,
    certify_best_responses,
    report_json,
    run_experiment,
    sweep_prices,
    threshold_table,
)


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage, which would read as "not converged"
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _positive_float(text):
    try:
        x = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not x > 0:
        raise argparse.ArgumentTypeError(f"must be > 0: {text!r}")
    return x


def _positive_int(text):
    try:
        n = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if n < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1: {text!r}")
    return n


def _seed(text):
    try:
        n = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if n < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0: {text!r}")
    return n


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", required=True, type=Path, help="YAML scenario file")
    common.add_argument("--seed", type=_seed, help="override dynamics.seed")
    common.add_argument("--tol", type=_positive_float, help="override dynamics.tol")
    common.add_argument("--max-slots", type=_positive_int, help="override dynamics.max_slots")

    parser = _Parser(prog="relayauction", description="Relay power auctions: simulate and verify.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", parents=[common], help="run the bid dynamics")
    p.add_argument("--out", type=Path, required=True, help="directory for trajectory.csv and report.json")
    p.add_argument("--check", action="append", choices=CHECKS, default=[],
                   help="oracle check to include in the report (repeatable)")

    p = sub.add_parser("sweep", parents=[common], help="sweep one relay's price")
    p.add_argument("--relay", type=int, default=0)
    p.add_argument("--prices", type=_positive_float, nargs="+", help="explicit price grid")
    p.add_argument("--grid", nargs=3, metavar=("LO", "HI", "N"),
                   help="geometric price grid with N points from LO to HI")
    p.add_argument("--jobs", type=_positive_int, default=1)
    p.add_argument("--out", type=Path, help="write sweep.csv here")

    sub.add_parser("thresholds", parents=[common], help="print every relay's threshold price")

    p = sub.add_parser("verify", parents=[common],
                       help="run the dynamics and certify best responses and the equilibrium")
    p.add_argument("--out", type=Path)
    p.add_argument("--check", action="append", choices=CHECKS, default=[])
    return parser


def _settings(args):
    settings = load_scenario(args.scenario)
    changes = {k: v for k, v in (("seed", args.seed), ("tol", args.tol), ("max_slots", args.max_slots))
               if v is not None}
    return settings.replace(**changes) if changes else settings


def _grid(args, parser):
    if args.prices and args.grid:
        parser.error("give either --prices or --grid")
    if args.prices:
        return np.array(args.prices)
    if not args.grid:
        parser.error("sweep needs --prices or --grid")
    try:
        lo, hi, n = float(args.grid[0]), float(args.grid[1]), int(args.grid[2])
    except ValueError:
        parser.error("--grid takes LO HI N")
    if not (0 < lo < hi) or n < 2:
        parser.error("--grid needs 0 < LO < HI and N >= 2")
    return np.geomspace(lo, hi, n)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        settings = _settings(args)
        if args.command == "sweep" and not 0 <= args.relay < settings.scenario.n_relays:
            parser.error(f"--relay must lie in 0..{settings.scenario.n_relays - 1}")
    except (ScenarioError, ValueError) as exc:
        print(f"relayauction: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    try:
        if args.command == "run":
            report, _ = run_experiment(settings, args.out, checks=args.check)
            print(report_json({"converged": report.converged, "slots": report.slots,
                               "checks": {k: v["passed"] for k, v in report.checks.items()}}))
            return report.exit_code
        if args.command == "thresholds":
            print(report_json(threshold_table(settings)))
            return EXIT_OK
        if args.command == "sweep":
            result = sweep_prices(settings, args.relay, _grid(args, parser), jobs=args.jobs)
            if args.out is not None:
                args.out.mkdir(parents=True, exist_ok=True)
                (args.out / "sweep.csv").write_text(result.to_csv())
            print(result.to_csv(), end="")
            print(report_json({"relay": result.relay, "threshold": result.threshold,
                               "empirical_bracket": result.bracket,
                               "demand_nonincreasing": result.demand_nonincreasing()}))
            return EXIT_OK
        report, traj = run_experiment(settings, args.out, checks=args.check, keep_trajectory=True)
        certs = {"initial": certify_best_responses(settings, traj.bids[0]),
                 "final": certify_best_responses(settings, traj.final_bids)}
        print(report_json({"converged": report.converged, "slots": report.slots,
                           "best_response": certs, "checks": report.checks}))
        if not all(c["passed"] for c in certs.values()):
            return EXIT_DISAGREEMENT
        return report.exit_code
    except OSError as exc:
        print(f"relayauction: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
