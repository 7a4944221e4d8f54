"""Command line entry point.

Exit codes: 0 all checks pass, 1 a check failed, 2 configuration error,
3 budget exhausted.  Errors are reported as one JSON object on stderr.
"""
from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction

from .config import ConfigError, RunConfig
from .group_model import BudgetExceeded
from .pipeline import Pipeline, dumps
from .walk_kernel import InfeasibleParameters, MCollision

EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_BUDGET = 0, 1, 2, 3
COMMANDS = ("validate", "build", "simulate", "green", "asymptotics", "boundary", "report")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _rational(text: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a rational number: {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="cuspwalk", description="Random walks on cusped graphs of relatively "
                 "hyperbolic groups: Green function, drift, entropy and boundary measures.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="JSON config file (flags override it)")
    ap.add_argument("--out", help="output directory (default: out)")
    ap.add_argument("--group", choices=("f2-rel-z", "z2-free-z"))
    ap.add_argument("--a", type=_rational)
    ap.add_argument("--p", type=_rational)
    ap.add_argument("--q", type=_rational)
    ap.add_argument("--seed", type=int)
    ap.add_argument("--steps", type=int)
    ap.add_argument("--paths", type=int)
    ap.add_argument("--radius", type=int, dest="ball_radius")
    ap.add_argument("--margin", type=int, dest="ball_margin")
    ap.add_argument("--budget", type=int)
    ap.add_argument("--horizon", type=int, dest="R_horizon")
    return ap


def _error(kind: str, message: str, **extra) -> None:
    sys.stderr.write(json.dumps({"error": kind, "message": message, **extra}, sort_keys=True) + "\n")


def run_command(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = RunConfig.load(args.config) if args.config else RunConfig().validate()
        overrides = {k: getattr(args, k) for k in ("group", "a", "p", "q", "seed", "steps", "paths",
                                                  "ball_radius", "ball_margin", "budget",
                                                  "R_horizon", "out")}
        cfg = cfg.replace(**overrides)
    except ConfigError as exc:
        _error("config", str(exc))
        return EXIT_CONFIG
    pipe = Pipeline(cfg)
    try:
        if args.command != "validate":
            pipe.params          # infeasible parameters fail before any work
        result = getattr(pipe, args.command)()
    except InfeasibleParameters as exc:
        _error("failed_checks", str(exc), failed=[f"condition ({exc.condition})"])
        return EXIT_FAILED
    except MCollision as exc:
        _error("failed_checks", str(exc), failed=["m-collision"])
        return EXIT_FAILED
    except BudgetExceeded as exc:
        _error("budget", str(exc))
        return EXIT_BUDGET
    except ConfigError as exc:
        _error("config", str(exc))
        return EXIT_CONFIG
    sys.stdout.write(dumps({"command": args.command, "passed": result.passed,
                            "checks": result.checks, "config_hash": cfg.hash,
                            "data": result.data}))
    if not result.passed:
        _error("failed_checks", f"{args.command}: {', '.join(result.failed())} failed",
               failed=result.failed())
        return EXIT_FAILED
    return EXIT_OK


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()
