import csv
import io
import json
import math

import pytest

from robust_spc import charts, report
from robust_spc.datagen import CLEAN
from robust_spc.report import Cell, ComparisonTable


def small_table():
    return report.table_from_values("t", {"a": (200.0, 100.0), "b": (400.0, 50.0)}, (0.0, 0.5))


def test_rarl_scaling():
    r = report.rarl_table(small_table())
    assert r.value("a", 0.0) == 500.0 and r.value("b", 0.0) == 500.0
    assert r.value("a", 0.5) == pytest.approx(250.0)
    assert r.value("b", 0.5) == pytest.approx(62.5)
    assert r.metadata["k"]["a"] == pytest.approx(2.5)


def test_rarl_bad_base():
    t = report.table_from_values("t", {"a": (0.0, 1.0)}, (0.0, 0.5))
    r = report.rarl_table(t)
    assert math.isnan(r.value("a", 0.5)) and not r.cell("a", 0.5).usable
    t = report.table_from_values("t", {"a": (1.0,)}, (0.5,))
    with pytest.raises(ValueError):
        report.rarl_table(t)


def test_table_validation():
    with pytest.raises(ValueError):
        ComparisonTable("t", ["a", "a"], [0.0], [[Cell(1.0)], [Cell(1.0)]])
    with pytest.raises(ValueError):
        ComparisonTable("t", ["a"], [0.0, 1.0], [[Cell(1.0)]])


def test_csv_and_json():
    t = small_table()
    rows = list(csv.reader(io.StringIO(report.emit(t, "csv").decode())))
    assert rows[0] == ["chart", "delta_0.0", "delta_0.5"]
    assert float(rows[2][2]) == 50.0
    back = report.parse_json(report.emit(t, "json"))
    assert back.to_dict() == t.to_dict()


def test_empty_shift_table_csv():
    t = ComparisonTable("t", ["a"], [], [[]])
    assert report.emit(t, "csv").decode() == "chart\na\n"


def test_text_layout():
    text = report.render_text(small_table())
    assert "Control Chart" in text and "400.0" in text


def test_reference_rarl_consistency():
    # every reference row except one reproduces the printed relative ARLs
    rebuilt = report.rarl_table(report.table_from_values("c", report.REFERENCE_CONTAMINATED))
    for row, printed in report.REFERENCE_RARL.items():
        if row == "Shewhart X-tilde":
            continue
        for shift, value in zip(report.SHIFTS, printed):
            assert rebuilt.value(row, shift) == pytest.approx(value, abs=0.1)


def test_assemble_and_compare():
    t = report.assemble_table({"Shewhart X-bar": charts.ShewhartConfig()}, CLEAN, (0.0, 1.5), 200)
    assert t.cell("Shewhart X-bar", 1.5).replications == 200
    cmp = report.compare_to_reference(t, report.REFERENCE_CLEAN)
    assert [c["delta"] for c in cmp] == [0.0, 1.5]
    assert cmp[1]["reference"] == 1.7
