"""Command-line entry point: ``ucac solve case.json [flags]``."""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

from . import backends
from .case import CaseError, load_case
from .driver import DriverOptions, solve_ucac
from .refinement import RefinementState
from .report import build_report, emit_commitment_table, summary_text

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_LIMIT = 2
EXIT_INFEASIBLE = 3
EXIT_USAGE = 64


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(f"{self.prog}: error: {message}")


def _positive(kind):
    def parse(text):
        v = kind(text)
        if not v > 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text}")
        return v
    return parse


def _fraction(text):
    v = float(text)
    if not 0 < v < 1:
        raise argparse.ArgumentTypeError(f"must lie in (0, 1), got {text}")
    return v


def build_parser() -> argparse.ArgumentParser:
    d = DriverOptions()
    p = _Parser(prog="ucac", description="Global solver for unit commitment with AC network constraints.")
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("solve", help="solve a case file")
    s.error = p.error  # usage errors of the subcommand share the exit code
    s.add_argument("case", help="case file (ucac-case-1 JSON)")
    s.add_argument("--outer-tol", type=_fraction, default=d.outer_tol)
    s.add_argument("--inner-tol", type=_fraction, default=d.inner_tol)
    s.add_argument("--time-limit", type=_positive(float), default=d.time_limit, help="wall clock seconds")
    s.add_argument("--max-outer", type=_positive(int), default=d.max_outer)
    s.add_argument("--stagnation-n", type=_positive(int), default=d.stagnation_n)
    s.add_argument("--initial-mip-gap", type=_fraction, default=d.initial_mip_gap)
    s.add_argument("--obbt", choices=("on", "off"), default="on" if d.obbt else "off")
    s.add_argument("--refine-k", type=_positive(int), default=d.refine_k)
    s.add_argument("--seed", type=int, default=d.seed)
    s.add_argument("--resume", metavar="STATE", help="refinement state JSON from an earlier run")
    for cls in backends.CLASSES:
        flag = "--backend-" + cls.replace("_", "-")
        s.add_argument(flag, metavar="CMD", dest="backend_" + cls, help=f"external command for {cls} solves")
    s.add_argument("--log", metavar="PATH", help="JSON-lines iteration log")
    s.add_argument("--out", metavar="DIR", default=".", help="directory for report.json and commitments.csv")
    s.add_argument("--state-out", metavar="PATH", help="write the final refinement state here")
    s.add_argument("-q", "--quiet", action="store_true")
    return p


def _exit_code(rec) -> int:
    if rec.termination == "gap-closed":
        return EXIT_OK
    if rec.termination == "master-infeasible":
        return EXIT_OK if rec.feasible else EXIT_INFEASIBLE
    return EXIT_LIMIT if rec.feasible else EXIT_ERROR


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)

    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        case = load_case(args.case)
    except (OSError, CaseError, ValueError) as exc:
        print(f"ucac: cannot load case {args.case}: {exc}", file=sys.stderr)
        return EXIT_ERROR

    opts = DriverOptions(
        outer_tol=args.outer_tol, inner_tol=args.inner_tol, time_limit=args.time_limit,
        max_outer=args.max_outer, stagnation_n=args.stagnation_n, initial_mip_gap=args.initial_mip_gap,
        obbt=args.obbt == "on", refine_k=args.refine_k, seed=args.seed, log_path=args.log,
    )
    for cls in backends.CLASSES:
        cmd = getattr(args, "backend_" + cls)
        if cmd:
            backends.configure(cls, cmd)

    try:
        state = RefinementState.load(args.resume) if args.resume else None
        rec = solve_ucac(case, opts, state)
    except Exception as exc:
        logging.getLogger("ucac").debug("solve failed", exc_info=True)
        print(f"ucac: solve failed: {exc}", file=sys.stderr)
        return EXIT_ERROR
    finally:
        for cls in backends.CLASSES:
            backends.configure(cls, None)

    report = build_report(case, rec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report.save(out / "report.json")
    (out / "commitments.csv").write_text(emit_commitment_table(report, "csv"))
    if args.state_out and rec.state is not None:
        rec.state.save(args.state_out)
    if not args.quiet:
        print(summary_text(report), end="")
        if not math.isfinite(rec.z_U) and rec.termination == "master-infeasible":
            print("the UC-AC problem is infeasible")
    return _exit_code(rec)


if __name__ == "__main__":
    sys.exit(main())
