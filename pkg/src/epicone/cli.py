"""Command-line driver: ``epicone eval | verify | solve``.

Every subcommand reads and writes JSON. Exit codes:

- 0: success (for ``eval``, also when the point is outside the cone;
  that is reported as data),
- 1: a verification check or the solver failed,
- 2: usage, parse or validation error.

Output is deterministic: identical inputs and seed give byte-identical
reports.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from typing import Optional, Sequence

import numpy as np

from .cone_barrier import BarrierOracle, ConePoint, in_interior, zeta
from .errors import ConfigError, DomainError, EpiconeError, InvalidProblem
from .ipm_solver import ConicProblem, SolverConfig, solve, trace_entropy_problem
from .scb_verifier import (
    CHECKS,
    DEFAULT_SEED,
    Tolerances,
    default_configs,
    run_campaign,
)
from .spectral_functions import ADMISSIBLE_DEFAULTS, FunctionFamily

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2

DEFAULT_VERIFY_SIDES = (1, 2, 3, 4)
DEFAULT_VERIFY_TRIALS = 200


class UsageError(Exception):
    """Bad arguments or unreadable input; maps to exit code 2."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# Input helpers


def _load_json(path: str):
    try:
        if path == "-":
            text = sys.stdin.read()
        else:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror or exc}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None


def _parse_family(text: str, allow_control: bool = False) -> FunctionFamily:
    try:
        return FunctionFamily.parse(text, allow_inadmissible=allow_control)
    except ValueError as exc:
        raise UsageError(f"--family: {exc}") from None


def _family_field(value, where: str) -> FunctionFamily:
    try:
        if isinstance(value, str):
            return FunctionFamily.parse(value)
        return FunctionFamily.from_dict(value)
    except ValueError as exc:
        raise UsageError(f"{where}: field 'family': {exc}") from None


def _parse_sides(text: str) -> list:
    """'3', '1,2,5' or '1-6'."""
    sides = []
    try:
        for part in text.split(","):
            part = part.strip()
            if "-" in part:
                lo, hi = (int(s) for s in part.split("-", 1))
                sides.extend(range(lo, hi + 1))
            else:
                sides.append(int(part))
    except ValueError:
        raise UsageError(f"--dim: cannot parse {text!r}; use e.g. 3, 1,2,5 or 1-6") from None
    if not sides or min(sides) < 1:
        raise UsageError("--dim: dimensions must be integers >= 1")
    return sorted(set(sides))


def _parse_tolerances(items: Optional[Sequence[str]]) -> Tolerances:
    overrides = {}
    for item in items or ():
        key, sep, val = item.partition("=")
        if not sep:
            raise UsageError(f"--tol expects KEY=VALUE, got {item!r}")
        overrides[key.strip()] = val.strip()
    try:
        return Tolerances().replace(**overrides)
    except ConfigError as exc:
        raise UsageError(f"--tol: {exc}") from None


def _write(payload, path: Optional[str], pretty: bool) -> None:
    text = json.dumps(payload, indent=2 if pretty else None, sort_keys=True, allow_nan=False)
    if path is None or path == "-":
        sys.stdout.write(text + "\n")
        return
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    except OSError as exc:
        raise UsageError(f"cannot write {path}: {exc.strerror or exc}") from None


def _finite_or_none(x):
    x = float(x)
    return x if math.isfinite(x) else None


# Subcommands


def _read_point(data: dict, path: str) -> ConePoint:
    try:
        if "point" in data:
            return ConePoint.from_dict(data["point"])
        if "x" in data:
            return ConePoint.from_packed(np.asarray(data["x"], dtype=float))
        return ConePoint.from_dict(data)
    except (TypeError, ValueError) as exc:
        field = "point" if "point" in data else ("x" if "x" in data else "u/v/W_packed")
        raise UsageError(f"{path}: field {field!r}: {exc}") from None


def cmd_eval(args) -> int:
    data = _load_json(args.input)
    if not isinstance(data, dict):
        raise UsageError(f"{args.input}: top level must be a JSON object")
    if args.family is not None:
        family = _parse_family(args.family)
    elif "family" in data:
        family = _family_field(data["family"], args.input)
    else:
        raise UsageError("no family given; pass --family or a 'family' field")
    point = _read_point(data, args.input)

    report = {
        "family": family.to_dict(),
        "d": point.side,
        "point": point.to_dict(),
        "interior": bool(in_interior(family, point)),
        "zeta": None,
        "gamma": None,
        "gradient": None,
        "euler_residual": None,
    }
    try:
        report["zeta"] = _finite_or_none(zeta(family, point))
    except DomainError:
        pass
    if report["interior"]:
        oracle = BarrierOracle(family, point)
        grad = oracle.gradient
        report["gamma"] = float(oracle.value) + 0.0  # no negative zero
        report["gradient"] = [float(g) for g in grad]
        report["euler_residual"] = abs(float(grad @ point.packed()) + oracle.nu)
    _write(report, args.output, args.pretty)
    return EXIT_OK


def cmd_verify(args) -> int:
    if args.trials < 1:
        raise UsageError("--trials must be >= 1")
    if args.seed < 0:
        raise UsageError("--seed must be >= 0")
    families = [_parse_family(t) for t in args.family] if args.family else list(ADMISSIBLE_DEFAULTS)
    sides = _parse_sides(args.dim) if args.dim else list(DEFAULT_VERIFY_SIDES)
    checks = tuple(args.checks.split(",")) if args.checks else CHECKS
    try:
        configs = default_configs(
            families, sides, args.trials, args.seed, _parse_tolerances(args.tol),
            include_control=args.control, checks=checks,
        )
    except ConfigError as exc:
        raise UsageError(str(exc)) from None
    report = run_campaign(configs, workers=args.workers)
    report["seed"] = args.seed
    _write(report, args.output, args.pretty)
    return EXIT_OK if report["passed"] else EXIT_FAILED


def cmd_solve(args) -> int:
    if args.example:
        problem = trace_entropy_problem(2)
    else:
        data = _load_json(args.input)
        try:
            problem = ConicProblem.from_dict(data)
        except (InvalidProblem, ValueError) as exc:
            raise UsageError(f"{args.input}: {exc}") from None
    try:
        config = SolverConfig(gap_tol=args.gap_tol, max_iters=args.max_iters)
    except ConfigError as exc:
        raise UsageError(str(exc)) from None
    result = solve(problem, config)
    _write(result.to_dict(), args.output, args.pretty)
    return EXIT_OK if result.status == "optimal" else EXIT_FAILED


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="epicone", description="Barrier oracles, verification and a conic solver for K.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    common = _Parser(add_help=False)
    common.add_argument("--output", "-o", help="output file (default: stdout)")
    common.add_argument("--pretty", action="store_true", help="indent the JSON output")

    p = sub.add_parser("eval", parents=[common], help="evaluate zeta, Gamma and grad Gamma at a point")
    p.add_argument("--input", "-i", required=True, help="point file ('-' for stdin)")
    p.add_argument("--family", help="neglog, negentropy or power:<p> (overrides the file)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("verify", parents=[common], help="run the randomized barrier checks")
    p.add_argument("--family", action="append", help="family to test (repeatable; default: all four)")
    p.add_argument("--dim", help="matrix sides, e.g. 3, 1,2,5 or 1-6 (default: 1-4)")
    p.add_argument("--trials", type=int, default=DEFAULT_VERIFY_TRIALS)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--tol", action="append", metavar="KEY=VALUE", help="override a check tolerance")
    p.add_argument("--checks", help="comma-separated subset of: " + ", ".join(CHECKS))
    p.add_argument("--control", action="store_true", help="also run the x^3 negative control")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("solve", parents=[common], help="solve a conic problem by path following")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--input", "-i", help="problem file ('-' for stdin)")
    src.add_argument("--example", choices=["entropy"], help="built-in problem")
    p.add_argument("--max-iters", type=int, default=SolverConfig.max_iters)
    p.add_argument("--gap-tol", type=float, default=SolverConfig.gap_tol)
    p.set_defaults(func=cmd_solve)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        sys.stderr.write(f"epicone: error: {exc}\n")
        return EXIT_USAGE
    except EpiconeError as exc:
        sys.stderr.write(f"epicone: {type(exc).__name__}: {exc}\n")
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
