import json
import math
import os
from pathlib import Path

import numpy as np
import pytest

from mflab.measures import PointCloudMeasure
from mflab.report import ReportDocument, canonical_json, emit_report, flatten_row, svg_line_chart, to_jsonable
from mflab.verify import ExperimentPlan, check_theorem, evaluate_verdicts

GOLDEN = Path(__file__).parent / "golden"


def synthetic_report() -> ReportDocument:
    cells = []
    for t in (1.0, 5.0):
        for N, rho in ((100, 0.04), (1000, 0.012), (10000, 0.004)):
            r = rho * t ** 0.5
            cells.append({"model": "sis", "N": N, "t": t, "seed": 42,
                          "estimates": {"residual": r, "ci_lo": r * 0.9, "ci_hi": r * 1.1},
                          "residual": r, "ci": [r * 0.9, r * 1.1]})
    doc = ReportDocument(
        experiment="theorem",
        model={"name": "sis", "params": {"beta": 2.0, "gamma": 1.0, "lambda0": 0.01}},
        plan={"N_list": [100, 1000, 10000], "t_list": [1.0, 5.0], "seed": 42,
              "tolerances": {"residual_max": 0.03}},
        cells=cells,
        trends={},
        verdicts={},
        provenance={"seed": 42, "config_sha256": "0" * 64},
        table_name="residuals",
        tables={"spot_check": [{"N": 10000, "t": 1.0, "h": "x0", "before": 0.5, "after": 0.51, "halfwidth": 0.02}]},
        chart={"x": "N", "y": "residual", "series": ["t"]},
        clouds={100: PointCloudMeasure.uniform(np.array([[0.25], [0.5]]))},
    )
    doc.trends, doc.verdicts = evaluate_verdicts(doc.to_dict(), with_trends=True)
    return doc


def test_synthetic_report_matches_golden(tmp_path):
    written = emit_report(synthetic_report(), tmp_path)
    names = sorted(p.name for p in written)
    assert names == ["cloud_N100.csv", "report.json", "residuals.csv", "residuals.svg", "spot_check.csv"]
    if os.environ.get("MFLAB_REGEN_GOLDEN"):
        for p in written:
            (GOLDEN / p.name).write_bytes(p.read_bytes())
    for p in written:
        assert p.read_bytes() == (GOLDEN / p.name).read_bytes(), p.name


def test_reemit_is_byte_identical(tmp_path):
    doc = synthetic_report()
    a = {p.name: p.read_bytes() for p in emit_report(doc, tmp_path / "a")}
    b = {p.name: p.read_bytes() for p in emit_report(doc, tmp_path / "b")}
    assert a == b


def test_empty_tables_give_report_json_only(tmp_path):
    doc = ReportDocument("corollary", {"name": "hopf"}, {}, [], {}, {"overall": "INAPPLICABLE"}, {"seed": 0})
    assert [p.name for p in emit_report(doc, tmp_path)] == ["report.json"]


def test_report_json_schema():
    d = json.loads(canonical_json(synthetic_report().to_dict()))
    assert {"experiment", "model", "plan", "cells", "trends", "verdicts", "provenance"} <= set(d)
    assert {"N", "t", "estimates", "residual", "ci"} <= set(d["cells"][0])
    assert d["verdicts"]["overall"] == "PASS"
    assert d["trends"]["slopes"]["t=1"]["slope"] == pytest.approx(math.log(0.004 / 0.04) / math.log(100), abs=0.02)


def test_csv_one_row_per_cell(tmp_path):
    emit_report(synthetic_report(), tmp_path)
    lines = (tmp_path / "residuals.csv").read_text().splitlines()
    assert len(lines) == 1 + 6
    assert lines[0].split(",")[:4] == ["model", "N", "t", "seed"]


def test_svg_is_self_contained():
    svg = svg_line_chart([("a", [100, 1000], [0.1, 0.01])], "t")
    assert svg.startswith("<svg") and "href" not in svg and "log10 N" in svg
    assert "<polyline" in svg


def test_nonfinite_values_become_null():
    assert to_jsonable({"a": float("nan"), "b": np.float64(np.inf), "c": np.int64(3)}) == {"a": None, "b": None, "c": 3}
    assert flatten_row({"a": {"b": 1, "c": [1, 2]}}) == {"a.b": 1, "a.c": "[1, 2]"}


def test_unwritable_directory_reports_path(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError, match=str(blocker)):
        emit_report(synthetic_report(), blocker / "sub")


def test_sis_theorem_emits_expected_files(tmp_path):
    doc = check_theorem(ExperimentPlan("sis", N_list=(50, 200), t_list=(1.0,), n_samples=100, burn_in=10, seed=42))
    names = {p.name for p in emit_report(doc, tmp_path)}
    assert {"report.json", "residuals.csv", "residuals.svg"} <= names
