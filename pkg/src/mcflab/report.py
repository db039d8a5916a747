"""JSON and CSV emitters with stable schemas.

Every JSON document carries ``schema_version``. Keys are sorted and floats
are written with ``repr`` so identical results give identical bytes.
"""

import csv
import json
import os
from dataclasses import dataclass, field

import numpy as np

SCHEMA_VERSION = 1
ACCEPTANCE_COLUMNS = ("criterion", "expected", "measured", "tolerance", "pass")


class ReportError(OSError):
    """An output file could not be written."""


def _plain(obj):
    """Convert numpy scalars and arrays into JSON-native values."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else repr(v)
    return obj


def dumps(obj):
    """Canonical JSON text with ``schema_version`` at the top level."""
    body = dict(_plain(obj))
    body.setdefault("schema_version", SCHEMA_VERSION)
    return json.dumps(body, indent=2, sort_keys=True) + "\n"


def write_json(obj, path):
    try:
        with open(path, "w") as fh:
            fh.write(dumps(obj))
    except OSError as exc:
        raise ReportError("cannot write %s: %s" % (path, exc)) from exc
    return path


@dataclass
class CriterionResult:
    """Outcome of one acceptance criterion.

    ``expected``, ``measured`` and ``tolerance`` are short text fields so that
    compound criteria fit one row; ``detail`` holds the raw numbers.
    """

    cid: int
    name: str
    expected: str
    measured: str
    tolerance: str
    passed: bool
    detail: dict = field(default_factory=dict)

    def row(self):
        return [str(self.cid), self.expected, self.measured, self.tolerance,
                "pass" if self.passed else "fail"]

    def to_dict(self):
        return {"criterion": self.cid, "name": self.name, "expected": self.expected,
                "measured": self.measured, "tolerance": self.tolerance,
                "pass": bool(self.passed), "detail": self.detail}


def write_acceptance_csv(results, path):
    """Columns: criterion, expected, measured, tolerance, pass."""
    if not results:
        raise ValueError("no results to write")
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(ACCEPTANCE_COLUMNS)
            for r in results:
                w.writerow(r.row())
    except OSError as exc:
        raise ReportError("cannot write %s: %s" % (path, exc)) from exc
    return path


def emit_report(results, fmt, path):
    """Write acceptance results as ``json`` or ``csv``."""
    if not results:
        raise ValueError("no results to write")
    if fmt == "csv":
        return write_acceptance_csv(results, path)
    if fmt == "json":
        passed = sum(r.passed for r in results)
        return write_json({"criteria": [r.to_dict() for r in results],
                           "passed": passed, "failed": len(results) - passed}, path)
    raise ValueError("unknown report format %r" % (fmt,))


def format_table(results):
    """Fixed-width text table, one line per criterion."""
    lines = ["%-4s %-5s %-28s %s" % ("id", "pass", "name", "measured")]
    for r in results:
        lines.append("%-4d %-5s %-28s %s" % (r.cid, "PASS" if r.passed else "FAIL",
                                            r.name[:28], r.measured))
    return "\n".join(lines)


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path
