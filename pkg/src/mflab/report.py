"""Report documents and their on-disk form (JSON, CSV tables, SVG charts)."""
from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .measures import write_cloud_csv

__all__ = ["ReportDocument", "emit_report", "to_jsonable", "flatten_row", "svg_line_chart"]


def to_jsonable(obj):
    """Plain-JSON copy of ``obj``: numpy scalars/arrays unwrapped, non-finite floats -> None."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def canonical_json(obj) -> str:
    return json.dumps(to_jsonable(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


@dataclass
class ReportDocument:
    """Result of one experiment.

    ``cells`` is the main per-(N, t) table; ``tables`` holds any extra tables.
    Clouds are kept for export but are not part of ``report.json``.
    """

    experiment: str
    model: dict
    plan: dict
    cells: list
    trends: dict
    verdicts: dict
    provenance: dict
    table_name: str = "cells"
    tables: dict = field(default_factory=dict)
    applicability: dict = field(default_factory=lambda: {"applicable": True, "reason": ""})
    notes: list = field(default_factory=list)
    chart: dict | None = None
    clouds: dict = field(default_factory=dict, repr=False)

    @property
    def status(self) -> str:
        return self.verdicts.get("overall", "FAIL")

    @property
    def passed(self) -> bool:
        return self.status == "PASS"

    def to_dict(self) -> dict:
        return to_jsonable({
            "experiment": self.experiment,
            "model": self.model,
            "plan": self.plan,
            "cells": self.cells,
            "trends": self.trends,
            "verdicts": self.verdicts,
            "provenance": self.provenance,
            "table_name": self.table_name,
            "tables": self.tables,
            "applicability": self.applicability,
            "notes": self.notes,
            "chart": self.chart,
        })


def flatten_row(row: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in row.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(flatten_row(v, key + "."))
        elif isinstance(v, (list, tuple)):
            out[key] = json.dumps(to_jsonable(v))
        else:
            out[key] = v
    return out


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else ""
    return str(v)


def _csv_text(rows: list) -> str:
    flat = [flatten_row(to_jsonable(r)) for r in rows]
    header: list = []
    for r in flat:
        for k in r:
            if k not in header:
                header.append(k)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in flat:
        w.writerow([_fmt(r.get(k)) for k in header])
    return buf.getvalue()


def _get(row: dict, dotted: str):
    for part in dotted.split("."):
        row = row.get(part) if isinstance(row, dict) else None
    return row


def svg_line_chart(panels: list, title: str, width: int = 420, panel_height: int = 220) -> str:
    """Stack of single-series log-log line charts.

    ``panels`` is a list of ``(label, xs, ys)``; nonpositive values are skipped.
    """
    margin_l, margin_r, margin_t, margin_b = 60, 20, 30, 40
    height = panel_height * max(1, len(panels))
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f"<title>{title}</title>",
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
    ]
    for p, (label, xs, ys) in enumerate(panels):
        pts = [(math.log10(x), math.log10(y)) for x, y in zip(xs, ys) if x and y and x > 0 and y > 0]
        top = p * panel_height
        x0, x1 = margin_l, width - margin_r
        y0, y1 = top + margin_t, top + panel_height - margin_b
        out.append(f'<text x="{width / 2:.1f}" y="{top + 18}" text-anchor="middle">{label}</text>')
        out.append(f'<line x1="{x0}" y1="{y1}" x2="{x1}" y2="{y1}" stroke="black"/>')
        out.append(f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>')
        out.append(f'<text x="{(x0 + x1) / 2:.1f}" y="{y1 + 30}" text-anchor="middle">log10 N</text>')
        out.append(
            f'<text x="14" y="{(y0 + y1) / 2:.1f}" text-anchor="middle" '
            f'transform="rotate(-90 14 {(y0 + y1) / 2:.1f})">log10 value</text>'
        )
        if not pts:
            continue
        lx = [a for a, _ in pts]
        ly = [b for _, b in pts]
        ax0, ax1 = min(lx), max(lx)
        ay0, ay1 = min(ly), max(ly)
        if ax1 == ax0:
            ax0, ax1 = ax0 - 0.5, ax1 + 0.5
        if ay1 == ay0:
            ay0, ay1 = ay0 - 0.5, ay1 + 0.5
        sx = lambda v: x0 + (v - ax0) / (ax1 - ax0) * (x1 - x0)
        sy = lambda v: y1 - (v - ay0) / (ay1 - ay0) * (y1 - y0)
        for v in (ax0, ax1):
            out.append(f'<text x="{sx(v):.1f}" y="{y1 + 14}" text-anchor="middle">{v:.2f}</text>')
        for v in (ay0, ay1):
            out.append(f'<text x="{x0 - 4}" y="{sy(v) + 4:.1f}" text-anchor="end">{v:.2f}</text>')
        poly = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in pts)
        out.append(f'<polyline points="{poly}" fill="none" stroke="#1f77b4" stroke-width="2"/>')
        for a, b in pts:
            out.append(f'<circle cx="{sx(a):.2f}" cy="{sy(b):.2f}" r="3" fill="#1f77b4"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _chart_panels(report: ReportDocument) -> list:
    spec = report.chart
    rows = [r for r in report.cells if all(_get(r, k) == v for k, v in spec.get("where", {}).items())]
    series_keys = []
    for r in rows:
        key = tuple(_get(r, k) for k in spec.get("series", []))
        if key not in series_keys:
            series_keys.append(key)
    panels = []
    for key in series_keys:
        sel = [r for r in rows if tuple(_get(r, k) for k in spec.get("series", [])) == key]
        label = ", ".join(f"{k}={v}" for k, v in zip(spec.get("series", []), key)) or spec["y"]
        panels.append((f"{spec['y']} ({label})" if key else spec["y"],
                       [_get(r, spec["x"]) for r in sel], [_get(r, spec["y"]) for r in sel]))
    return panels


def emit_report(report: ReportDocument, out_dir: str | os.PathLike, svg: bool = True) -> list:
    """Write ``report.json``, one CSV per table, chart SVGs and cloud CSVs.

    Output bytes depend only on the report. Returns the written paths.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    written = []

    def put(name: str, text: str):
        path = out / name
        try:
            path.write_text(text)
        except OSError as exc:
            raise OSError(f"cannot write {path}: {exc}") from exc
        written.append(path)

    put("report.json", canonical_json(report.to_dict()))
    if report.cells:
        put(f"{report.table_name}.csv", _csv_text(report.cells))
        if svg and report.chart:
            put(f"{report.table_name}.svg", svg_line_chart(_chart_panels(report), f"{report.experiment}: {report.model.get('name')}"))
    for name in sorted(report.tables):
        if report.tables[name]:
            put(f"{name}.csv", _csv_text(report.tables[name]))
    for N in sorted(report.clouds):
        path = out / f"cloud_N{N}.csv"
        write_cloud_csv(report.clouds[N], path)
        written.append(path)
    return written
