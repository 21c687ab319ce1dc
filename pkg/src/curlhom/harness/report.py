"""Deterministic JSON and CSV emission of convergence reports.

Floats are written with 17 significant digits (``%.17g``), keys keep their
insertion order, and timings go to a separate ``timings.json`` so that the
report files themselves are byte-stable across runs and worker counts.

CSV columns (one row per epsilon, sorted by epsilon descending):

``epsilon``, ``fine_resolution``, ``fine_residual``, ``fine_iterations``,
``fine_divergence``, ``through_order``, ``error``, ``error_homogenized``,
``status``, ``stage``, ``message``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

__all__ = ["CSV_COLUMNS", "to_json", "to_csv", "export_report", "load_report", "ReportError"]

CSV_COLUMNS = (
    "epsilon",
    "fine_resolution",
    "fine_residual",
    "fine_iterations",
    "fine_divergence",
    "through_order",
    "error",
    "error_homogenized",
    "status",
    "stage",
    "message",
)


class ReportError(OSError):
    """Report files could not be written or read."""


def _format_float(x: float) -> str:
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return format(x, ".17g")


def _emit(value, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(value, bool) or value is None:
        return json.dumps(value)
    if isinstance(value, float):
        return _format_float(value)
    if isinstance(value, int):
        return str(value)
    if isinstance(value, str):
        return json.dumps(value)
    if hasattr(value, "item") and not isinstance(value, (list, tuple, dict)):
        return _emit(value.item(), indent, level)
    if isinstance(value, dict):
        if not value:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_emit(v, indent, level + 1)}" for k, v in value.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(value, (list, tuple)):
        if not value:
            return "[]"
        items = [f"{pad}{_emit(v, indent, level + 1)}" for v in value]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(value).__name__}")


def to_json(data, indent: int = 2) -> str:
    """JSON text with ``%.17g`` floats."""
    return _emit(data, indent, 0) + "\n"


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return _format_float(value)
    return str(value)


def to_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow([_cell(row.get(c)) for c in CSV_COLUMNS])
    return buf.getvalue()


def export_report(report, out_dir, formats=("json", "csv")) -> list[Path]:
    """Write ``report.json`` / ``report.csv`` and ``timings.json`` into ``out_dir``.

    ``report`` is a :class:`ConvergenceReport` or its ``as_dict()`` form.
    """
    data = report.as_dict() if hasattr(report, "as_dict") else dict(report)
    timings = getattr(report, "timings", None)
    out = Path(out_dir)
    written = []
    try:
        out.mkdir(parents=True, exist_ok=True)
        for fmt in formats:
            if fmt == "json":
                path = out / "report.json"
                path.write_text(to_json(data))
            elif fmt == "csv":
                path = out / "report.csv"
                path.write_text(to_csv(data.get("rows", [])))
            else:
                raise ValueError(f"unknown report format {fmt!r}")
            written.append(path)
        if timings:
            path = out / "timings.json"
            path.write_text(json.dumps(timings, indent=2, sort_keys=True, default=str) + "\n")
            written.append(path)
    except OSError as exc:
        raise ReportError(f"cannot write report into {out}: {exc}") from exc
    return written


def load_report(path) -> dict:
    path = Path(path)
    if path.is_dir():
        path = path / "report.json"
    try:
        return json.loads(path.read_text())
    except OSError as exc:
        raise ReportError(f"cannot read report {path}: {exc}") from exc
