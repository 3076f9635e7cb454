"""Command line entry point.

Exit status: 0 when no attack was found within the bounds, 1 when an attack
was found, 2 for usage errors, unreadable files and protocol diagnostics.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import properties as props
from .dsl import DslError, load_protocol, render_protocol_dsl
from .explorer import Bounds, Scenario
from .protocols import MODELS, audit_structural_symmetry
from .report import AnalysisRequest, emit_report, run_analysis
from .terms import pub

EXIT_OK, EXIT_ATTACK, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _path_length(text: str) -> tuple[int, int]:
    lo, sep, hi = text.partition("..")
    try:
        return (int(lo), int(hi)) if sep else (2, int(lo))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected N or LO..HI, got {text!r}") from None


def _names(text: str) -> list[str]:
    return [n.strip() for n in text.split(",") if n.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pathgauge",
                                     description="Bounded symbolic analysis of path protocols.")
    sub = parser.add_subparsers(dest="command", required=True)

    check = sub.add_parser("check", help="search for a property violation")
    check.add_argument("--protocol", required=True, help="built-in model name or protocol file")
    check.add_argument("--property", required=True, choices=props.PROPERTIES)
    d = Bounds()
    check.add_argument("--max-steps", type=int, default=d.max_steps)
    check.add_argument("--max-agents", type=int, default=d.max_agents)
    check.add_argument("--path-length", type=_path_length, default=(d.min_path_length, d.max_path_length),
                       metavar="N|LO..HI", help="number of agents on a path, initiator and final included")
    check.add_argument("--max-corrupt", type=int, default=d.max_corrupt)
    check.add_argument("--recombination-depth", type=int, default=d.recombination_depth)
    check.add_argument("--max-states", type=int, default=d.max_states, help="per-scenario state cap")
    check.add_argument("--format", choices=("json", "text"), default="json")
    check.add_argument("--seed", type=int, default=0, help="reserved; the search is deterministic")
    check.add_argument("--minimize", action=argparse.BooleanOptionalAction, default=True)
    check.add_argument("--scenario", metavar="FILE",
                       help='JSON file {"path": [...], "corrupt": [...]} fixing a single scenario')
    check.add_argument("--path", type=_names, metavar="A,M1,...,E", help="fix the path instead of enumerating")
    check.add_argument("--corrupt", type=_names, default=None, metavar="M1,M3",
                       help="corrupt agents of the fixed path")
    check.add_argument("--timing", action="store_true", help="include wall-clock time (breaks byte equality)")
    check.add_argument("-o", "--output", metavar="FILE", help="write the report here instead of stdout")

    sub.add_parser("list", help="list built-in models and their properties")

    render = sub.add_parser("render", help="print a protocol in the file format")
    render.add_argument("protocol")

    audit = sub.add_parser("audit", help="compare packet shapes across hops")
    audit.add_argument("protocol")
    return parser


def _scenario(args) -> Scenario | None:
    path, corrupt = args.path, args.corrupt
    if args.scenario:
        if path is not None:
            raise UsageError("--scenario and --path are mutually exclusive")
        try:
            with open(args.scenario, encoding="utf-8") as fh:
                data = json.load(fh)
            path, file_corrupt = data["path"], data.get("corrupt", [])
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise UsageError(f"cannot read scenario {args.scenario}: {exc}") from None
        corrupt = file_corrupt if corrupt is None else corrupt
    if path is None:
        if corrupt:
            raise UsageError("--corrupt needs a fixed path")
        return None
    try:
        return Scenario(tuple(pub(n) for n in path), frozenset(pub(n) for n in corrupt or ()))
    except ValueError as exc:
        raise UsageError(f"bad scenario: {exc}") from None


def _check(args, out) -> int:
    lo, hi = args.path_length
    try:
        bounds = Bounds(max_agents=args.max_agents, min_path_length=lo, max_path_length=hi,
                        max_steps=args.max_steps, max_corrupt=args.max_corrupt,
                        recombination_depth=args.recombination_depth, max_states=args.max_states)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    spec = _load(args.protocol)
    try:
        req = AnalysisRequest(spec, args.property, bounds, _scenario(args), args.minimize, args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    report = run_analysis(req)
    text = emit_report(report, args.format, args.timing)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        out.write(text)
    return report.exit_code


def _load(ref: str):
    try:
        return load_protocol(ref)
    except FileNotFoundError:
        raise UsageError(f"{ref!r} is neither a built-in model ({', '.join(MODELS)}) nor a file") from None
    except OSError as exc:
        raise UsageError(f"cannot read {ref}: {exc.strerror or exc}") from None


def main(argv: list[str] | None = None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed the message
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        if args.command == "check":
            return _check(args, out)
        if args.command == "list":
            for name in MODELS:
                spec = _load(name)
                out.write(f"{name:<18}{', '.join(spec.properties):<40}{spec.description}\n")
            return EXIT_OK
        if args.command == "render":
            out.write(render_protocol_dsl(_load(args.protocol)))
            return EXIT_OK
        mismatches = audit_structural_symmetry(_load(args.protocol))
        for m in mismatches:
            out.write(f"{m}\n")
        if not mismatches:
            out.write("packet shapes agree at every position\n")
        return EXIT_OK
    except DslError as exc:
        for d in exc.diagnostics:
            err.write(f"{args.protocol}:{d}\n")
        return EXIT_USAGE
    except UsageError as exc:
        err.write(f"pathgauge: error: {exc}\n")
        return EXIT_USAGE


def main_exit() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
