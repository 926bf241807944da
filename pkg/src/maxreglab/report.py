"""Verdicts, reports and their JSON / CSV / text serializations."""

from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import asdict, dataclass, field
from typing import Any, Optional

DIVERGENCE_HEADER = ["epsilon", "n_cells", "udot_l2h_sq", "increment"]


@dataclass
class Verdict:
    name: str
    measured: Any
    threshold: Any
    comparison: str
    passed: bool
    detail: str = ""


@dataclass
class Table:
    header: list
    rows: list


@dataclass
class Report:
    command: str
    config: dict
    verdicts: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.verdicts)

    def add(self, name, measured, threshold, comparison, detail="", passed=None):
        if passed is None:
            passed = _compare(measured, threshold, comparison)
        self.verdicts.append(Verdict(name, _plain(measured), _plain(threshold), comparison,
                                     bool(passed), detail))
        return self.verdicts[-1]

    def merge(self, other: "Report") -> None:
        self.verdicts.extend(other.verdicts)
        self.tables.update(other.tables)
        self.warnings.extend(w for w in other.warnings if w not in self.warnings)

    def to_dict(self) -> dict:
        return _plain(asdict(self))

    @classmethod
    def from_dict(cls, data: dict) -> "Report":
        return cls(
            data["command"],
            data["config"],
            [Verdict(**v) for v in data["verdicts"]],
            {k: Table(**t) for k, t in data["tables"].items()},
            list(data["warnings"]),
        )


def _compare(measured, threshold, comparison) -> bool:
    if measured is None:
        return False
    if comparison == "<=":
        return measured <= threshold
    if comparison == ">=":
        return measured >= threshold
    if comparison == "in":
        lo, hi = threshold
        return lo <= measured <= hi
    if comparison == "==":
        return measured == threshold
    raise ValueError(f"unknown comparison {comparison!r}")


def _plain(obj):
    """Convert numpy scalars / arrays / tuples into JSON-ready Python values."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if hasattr(obj, "tolist"):
        return _plain(obj.tolist())
    if isinstance(obj, float):
        return None if not math.isfinite(obj) else obj
    if isinstance(obj, bool) or obj is None or isinstance(obj, (int, str)):
        return obj
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def to_json(report: Report) -> str:
    return json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def table_csv(table: Table) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(table.header)
    for row in table.rows:
        writer.writerow([_fmt(x) for x in row])
    return buf.getvalue()


def divergence_csv_rows(rows) -> list:
    """Rows (epsilon, n_cells, udot_l2h_sq, increment) with increments between rows."""
    out, prev = [], None
    for eps, n, val in rows:
        out.append([float(eps), int(n), float(val), None if prev is None else float(val - prev)])
        prev = val
    return out


def to_text(report: Report) -> str:
    lines = [f"maxreglab {report.command}"]
    for v in report.verdicts:
        mark = "PASS" if v.passed else "FAIL"
        lines.append(f"[{mark}] {v.name}: measured={_short(v.measured)} {v.comparison} "
                     f"{_short(v.threshold)}" + (f"  ({v.detail})" if v.detail else ""))
    for w in report.warnings:
        lines.append(f"[WARN] {w}")
    n_fail = sum(not v.passed for v in report.verdicts)
    lines.append(f"{len(report.verdicts) - n_fail}/{len(report.verdicts)} checks passed")
    return "\n".join(lines) + "\n"


def _short(x):
    if isinstance(x, float):
        return f"{x:.6g}"
    if isinstance(x, list):
        return "[" + ", ".join(_short(v) for v in x) + "]"
    return str(x)


def emit(report: Report, out_dir: str, formats=("json", "csv", "text")) -> list:
    """Write the report; returns the written paths."""
    os.makedirs(out_dir, exist_ok=True)
    written = []

    def write(name, text):
        path = os.path.join(out_dir, name)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        written.append(path)

    if "json" in formats:
        write("report.json", to_json(report))
    if "csv" in formats:
        for name, table in sorted(report.tables.items()):
            write(f"{name}.csv", table_csv(table))
    if "text" in formats:
        write("report.txt", to_text(report))
    return written


def load_json(path: str) -> Optional[Report]:
    with open(path, encoding="utf-8") as fh:
        return Report.from_dict(json.load(fh))
