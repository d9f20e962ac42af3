"""Command-line entry point.

Exit codes: 0 success, 2 configuration error (including failed assumption
audit at load), 3 solver or time-march failure, 4 acceptance-check failure
(MMS order regression, non-Cauchy or unbounded sweep, failed audit command).
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from .config import ConfigError, parse_config
from .harness import SweepFailure, cmd_audit, cmd_mms, cmd_sweep, cmd_tables, execute
from .solver import LinearSolveFailure, NonConvergence
from .time_march import AssumptionViolation, PositivityViolation, StepUnderflow

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_CHECK = 0, 2, 3, 4

CASES_DIR = os.path.join(os.path.dirname(__file__), "cases")


def resolve_config(name):
    """A path, or the name of a shipped case (``injection_1d``)."""
    if os.path.exists(name):
        return name
    shipped = os.path.join(CASES_DIR, name if name.endswith(".ini") else name + ".ini")
    if os.path.exists(shipped):
        return shipped
    raise ConfigError(f"config not found: {name}")


def _waive_list(text):
    return tuple(v.strip() for v in text.split(",") if v.strip()) if text else ()


def build_parser():
    p = argparse.ArgumentParser(prog="h2flow", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out=True):
        sp.add_argument("--config", required=True, help="INI file or shipped case name")
        if out:
            sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--waive-assumptions", default="", metavar="LIST",
                        help="comma separated hypotheses to waive, e.g. H6")
        sp.add_argument("--seed", type=int, default=0, help="seed for randomized diagnostics")

    sp = sub.add_parser("run", help="run one configuration")
    common(sp)
    sp.add_argument("--stop-time", type=float, default=None, help="stop early (restartable)")
    sp.add_argument("--resume", action="store_true", help="continue from OUT/checkpoint.npz")

    sp = sub.add_parser("sweep", help="eps / eta / h ladder")
    common(sp)
    sp.add_argument("--parameter", required=True, choices=("eps", "eta", "h"))
    sp.add_argument("--ladder", default=None, help="comma separated values (default from config)")
    sp.add_argument("--workers", type=int, default=1)

    sp = sub.add_parser("mms", help="manufactured-solution convergence study")
    common(sp)
    sp.add_argument("--solution", default="smooth", choices=("smooth", "steady_linear"))
    sp.add_argument("--levels", default="25,50,100")

    sp = sub.add_parser("audit", help="check the model hypotheses")
    common(sp, out=False)

    sp = sub.add_parser("tables", help="dump global-pressure tables")
    common(sp)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    np.random.seed(args.seed)
    waive = _waive_list(args.waive_assumptions)
    try:
        cfg = parse_config(resolve_config(args.config), waive=waive)
        if args.command == "run":
            _, _, summary = execute(cfg, out=args.out, waive=waive, stop_time=args.stop_time,
                                    resume=args.resume)
            print(json.dumps(summary, indent=2, sort_keys=True))
            return EXIT_OK
        if args.command == "sweep":
            ladder = None
            if args.ladder:
                ladder = [float(v) for v in args.ladder.split(",")]
            rep = cmd_sweep(cfg, args.parameter, ladder, out=args.out, workers=args.workers)
            print(f"differences: {rep['differences']}")
            print(f"ratios: {rep['ratios']}  cauchy={rep['cauchy']}  bounded={rep['bounded']}")
            return EXIT_OK if rep["cauchy"] and rep["bounded"] else EXIT_CHECK
        if args.command == "mms":
            levels = tuple(int(v) for v in args.levels.split(","))
            space, time, verdict = cmd_mms(cfg, args.solution, levels, out=args.out)
            print(space.as_csv())
            print(time.as_csv())
            print(json.dumps(verdict))
            return EXIT_OK if verdict["passed"] else EXIT_CHECK
        if args.command == "audit":
            rep = cmd_audit(cfg, waive)
            print(rep.as_text(), end="")
            return EXIT_OK if rep.passed else EXIT_CHECK
        if args.command == "tables":
            print(cmd_tables(cfg, args.out))
            return EXIT_OK
    except (ConfigError, AssumptionViolation) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (StepUnderflow, NonConvergence, LinearSolveFailure, PositivityViolation) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except SweepFailure as exc:
        print(f"sweep failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_CONFIG  # pragma: no cover


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
