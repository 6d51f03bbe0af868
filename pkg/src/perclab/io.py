"""Config parsing, CSV output and run manifests.

A config is ``key=value`` lines with ``#`` comments; tuples are comma
separated.  A manifest is itself a valid config whose comment header names
the command and the files it produced, so it can be replayed directly.
"""

from __future__ import annotations

import csv
import math
import typing
from dataclasses import fields
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from perclab import __version__
from perclab.experiments import ExperimentReport, SPEC_FIELDS, SpecRangeError, SweepSpec, Table
from perclab.geodesics import INFINITE

MANIFEST = "manifest.txt"


class SpecParseError(ValueError):
    """Malformed config text; ``line`` is 1-based."""

    def __init__(self, line: int, message: str, key: str | None = None):
        super().__init__(f"line {line}: {message}")
        self.line = line
        self.key = key


class SpecValueError(SpecParseError):
    """A value outside its allowed range; the message names the key."""


_HINTS = typing.get_type_hints(SweepSpec)


def _convert(key: str, raw: str):
    hint = _HINTS[key]
    if typing.get_origin(hint) is tuple:
        (inner, _) = typing.get_args(hint)
        parts = [s.strip() for s in raw.split(",")] if raw.strip() else []
        return tuple(inner(s) for s in parts)
    return hint(raw)


def parse_spec(text: str) -> SweepSpec:
    """Spec from config text.  Unknown or repeated keys are errors; an empty
    text gives the default spec."""
    values: dict[str, object] = {}
    lines: dict[str, int] = {}
    for no, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise SpecParseError(no, f"expected key=value, got {body!r}")
        key, raw = (s.strip() for s in body.split("=", 1))
        if key not in SPEC_FIELDS:
            raise SpecParseError(no, f"unknown key {key!r}", key)
        if key in values:
            raise SpecParseError(no, f"duplicate key {key!r}", key)
        try:
            values[key] = _convert(key, raw)
        except ValueError as exc:
            raise SpecParseError(no, f"{key}: cannot parse {raw!r} ({exc})", key) from None
        lines[key] = no
    try:
        return SweepSpec(**values)
    except SpecRangeError as exc:
        raise SpecValueError(lines.get(exc.key, 0), str(exc), exc.key) from None


def _spec_value(v) -> str:
    if isinstance(v, tuple):
        return ",".join(_spec_value(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def serialize_spec(spec: SweepSpec) -> str:
    """Every field as ``key=value``, in declaration order."""
    return "".join(f"{f.name}={_spec_value(getattr(spec, f.name))}\n" for f in fields(spec))


def format_value(v) -> str:
    """CSV cell text: ``%.12g`` floats, plain integers, 0/1 booleans."""
    if v is None:
        return ""
    if v is INFINITE:
        return "inf"
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return "%.12g" % v
    return str(v)


def write_csv(path: str | Path, table: Table) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(table.columns)
        for row in table.rows:
            w.writerow([format_value(v) for v in row])
    return path


def read_csv(path: str | Path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def write_report(report: ExperimentReport, out_dir: str | Path, argv: list[str] | None = None) -> list[Path]:
    """Write one CSV per table (sorted by name), then the manifest.

    Returns the CSV paths followed by the manifest path.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = [write_csv(out / f"{name}.csv", report.tables[name]) for name in sorted(report.tables)]
    stamp = datetime.now(timezone.utc).isoformat(timespec="seconds")
    header = [
        "# perclab run manifest",
        f"# version={__version__}",
        f"# timestamp={stamp}",
        f"# command={report.command}",
        f"# outputs={','.join(p.name for p in written)}",
    ]
    if argv is not None:
        header.append("# argv=" + " ".join(argv))
    manifest = out / MANIFEST
    manifest.write_text("\n".join(header) + "\n" + serialize_spec(report.spec), encoding="utf-8", newline="\n")
    return written + [manifest]


def read_manifest(path: str | Path) -> tuple[str, SweepSpec, list[str]]:
    """``(command, spec, outputs)`` from a manifest file."""
    text = Path(path).read_text(encoding="utf-8")
    meta = {}
    for line in text.splitlines():
        if line.startswith("# ") and "=" in line:
            k, v = line[2:].split("=", 1)
            meta[k.strip()] = v.strip()
    if "command" not in meta:
        raise SpecParseError(1, "manifest has no command line")
    outputs = [s for s in meta.get("outputs", "").split(",") if s]
    return meta["command"], parse_spec(text), outputs


def read_function_table(path: str | Path) -> tuple[int, np.ndarray]:
    """Values one per line (``#`` comments allowed); the count must be a
    power of two."""
    vals = []
    for no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        try:
            vals.append(float(body))
        except ValueError:
            raise SpecParseError(no, f"not a number: {body!r}") from None
    n = len(vals)
    if n == 0 or n & (n - 1):
        raise SpecParseError(0, f"table needs 2**K entries, got {n}")
    return n.bit_length() - 1, np.array(vals)
