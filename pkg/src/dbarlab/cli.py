"""Command line entry point ``lab``.

Exit codes: 0 ok, 2 configuration error, 3 solver failure, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .errors import LabError
from .experiment import KINDS, ExperimentConfig, RunReport, compare_runs, run_experiment

log = logging.getLogger("dbarlab")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lab", description="weighted dbar-Neumann experiments")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for kind in KINDS:
        s = sub.add_parser(kind, help=f"run a {kind} experiment from a JSON config")
        s.add_argument("config")
        s.add_argument("--seed", type=int, default=None, help="override the config seed")
        s.add_argument("--plots", action="store_true", help="also write SVG plots")
        s.add_argument("--output", default=None, help="output directory (default: $LAB_OUTPUT_ROOT/<name>)")
    c = sub.add_parser("compare", help="diff two run reports of the same kind")
    c.add_argument("a")
    c.add_argument("b")
    return p


def _summary(report: RunReport) -> str:
    r = report.results
    if "probe" in r:
        return f"verdict: {r['probe']['verdict']}"
    if "double_star" in r:
        return f"star: {r['star']['verdict']}, double_star: {r['double_star']['verdict']}"
    if "spectrum" in r:
        return f"lambda_min: {r['spectrum']['eigenvalues'][0]:.8g}"
    if "kohn_morrey" in r:
        return f"max residual: {r['kohn_morrey']['max_residual']}"
    if "certificate" in r:
        c = r["certificate"]
        return f"P: {c['P_holds']}, P~: {c['P_tilde_holds']}"
    return ""


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "compare":
            diff = compare_runs(RunReport.load(args.a), RunReport.load(args.b))
            print(json.dumps(diff, indent=2, sort_keys=True))
            return 0
        cfg = ExperimentConfig.load(args.config, kind=args.command)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.plots:
            cfg.plots = True
        report = run_experiment(cfg, args.output)
        for w in report.warnings:
            print(f"warning: {w}", file=sys.stderr)
        print(f"{cfg.kind}: {_summary(report)}")
        return 0
    except LabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
