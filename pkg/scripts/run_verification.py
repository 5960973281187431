#!/usr/bin/env python3
"""Run the randomized barrier checks over a grid of families and sides.

Writes the JSON campaign report and prints a per-configuration table of
worst relative margins. The defaults reproduce the acceptance scale for
the homogeneity checks; use --trials to go larger or smaller.

    python3 scripts/run_verification.py --sides 1-8 --trials 1000 --control -o report.json
"""

import argparse
import json
import time

from epicone.cli import _parse_sides
from epicone.scb_verifier import CHECKS, DEFAULT_SEED, default_configs, run_campaign
from epicone.spectral_functions import ADMISSIBLE_DEFAULTS, FunctionFamily


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sides", default="1-6")
    parser.add_argument("--trials", type=int, default=1000)
    parser.add_argument("--seed", type=int, default=DEFAULT_SEED)
    parser.add_argument("--family", action="append", help="restrict to these families (repeatable)")
    parser.add_argument("--checks", default=",".join(CHECKS))
    parser.add_argument("--control", action="store_true", help="include the x^3 negative control")
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("-o", "--output", default="verification_report.json")
    args = parser.parse_args()

    families = [FunctionFamily.parse(f) for f in args.family] if args.family else ADMISSIBLE_DEFAULTS
    configs = default_configs(
        families, _parse_sides(args.sides), args.trials, args.seed,
        include_control=args.control, checks=tuple(args.checks.split(",")),
    )
    start = time.perf_counter()
    report = run_campaign(configs, workers=args.workers)
    elapsed = time.perf_counter() - start

    checks = [c for c in CHECKS if c in args.checks.split(",")]
    print(f"{'family':<12}{'d':>3}  " + "  ".join(f"{c[:12]:>12}" for c in checks))
    for cfg in report["configurations"]:
        cells = []
        for name in checks:
            res = cfg["checks"][name]
            mark = " " if res["passed"] else "*"
            rel = res["worst_relative"]
            cells.append(f"{rel:>11.2e}{mark}" if isinstance(rel, float) else f"{rel:>11}{mark}")
        print(f"{cfg['label']:<12}{cfg['side']:>3}  " + "  ".join(cells))
    print("(worst relative margin per check; * marks a failed check)")
    for ctl in report["controls"]:
        print(f"control {ctl['label']} d={ctl['side']}: flagged {', '.join(ctl['flagged']) or 'nothing'}")
    print(f"admissible families passed: {report['passed']}  ({elapsed:.1f}s)")

    with open(args.output, "w") as fh:
        json.dump(report, fh, sort_keys=True, indent=1)
    print(f"report written to {args.output}")
    return 0 if report["passed"] else 1


if __name__ == "__main__":
    raise SystemExit(main())
