"""Command line entry point."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from perclab import __version__, entropy
from perclab.experiments import COMMANDS, SweepSpec
from perclab.io import (
    SpecParseError, parse_spec, read_function_table, read_manifest, write_csv, write_report,
)
from perclab.experiments import Table

# Which replica count ``--replicas`` overrides for each command.
_REPLICA_KEYS = {
    "variance-sweep": ("replicas",),
    "influence-sweep": ("replicas",),
    "time-constant": ("replicas",),
    "tail-sweep": ("tail_replicas", "event_replicas"),
    "lemma-estimands": ("lemma_replicas",),
}


def _load_spec(path: str | None) -> SweepSpec:
    return parse_spec(Path(path).read_text(encoding="utf-8") if path else "")


def _apply_overrides(command: str, spec: SweepSpec, args) -> SweepSpec:
    change = {}
    if args.seed is not None:
        change["seed"] = args.seed
    if args.replicas is not None:
        for key in _REPLICA_KEYS[command]:
            change[key] = args.replicas
    if args.workers is not None:
        change["workers"] = args.workers
    return replace(spec, **change) if change else spec


def _run(command: str, spec: SweepSpec, out: str, argv) -> int:
    report = COMMANDS[command](spec)
    report.command = command
    for path in write_report(report, out, argv):
        print(path)
    return 0


def _entropy_lab(args) -> int:
    K, table = read_function_table(args.table)
    f = entropy.CubeFunction(K, table, args.p)
    reports = entropy.all_reports(f, args.ordering)
    print(f"K={K} p={args.p} E={entropy.expectation(f):.12g} Var={entropy.variance(f):.12g}")
    for r in reports:
        state = "vacuous" if r.vacuous else ("ok" if r.holds else "VIOLATED")
        print(f"{r.check:22s} lhs={r.lhs:.12g} rhs={r.rhs:.12g} slack={r.slack:.12g} {state}")
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        print(write_csv(Path(args.out) / "entropy.csv",
                        Table(entropy.ENTROPY_COLUMNS, entropy.report_rows(reports))))
    return 0 if all(r.holds for r in reports) else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="perclab", description=__doc__)
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, help=COMMANDS[name].__doc__.splitlines()[0])
        sp.add_argument("config", nargs="?", help="key=value config file (defaults if omitted)")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--replicas", type=int)
        sp.add_argument("--workers", type=int)
        sp.add_argument("--out", required=True, help="output directory")
    sp = sub.add_parser("entropy-lab", help="slack reports for a function table")
    sp.add_argument("table", help="one value per line, 2**K lines")
    sp.add_argument("--p", type=float, default=0.5)
    sp.add_argument("--ordering", type=lambda s: [int(k) for k in s.split(",")], default=None)
    sp.add_argument("--out", help="also write entropy.csv here")
    sp = sub.add_parser("rerun", help="replay a run manifest")
    sp.add_argument("manifest")
    sp.add_argument("--out", required=True)
    return ap


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "entropy-lab":
            return _entropy_lab(args)
        if args.command == "rerun":
            command, spec, _ = read_manifest(args.manifest)
            if command not in COMMANDS:
                raise SpecParseError(1, f"unknown command {command!r} in manifest")
            return _run(command, spec, args.out, ["rerun", args.manifest])
        spec = _apply_overrides(args.command, _load_spec(args.config), args)
        return _run(args.command, spec, args.out, argv)
    except (SpecParseError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
