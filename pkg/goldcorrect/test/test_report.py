import csv
import io
import re
import xml.etree.ElementTree as ET

import pytest

from goldcorrect.errors import InvalidInputError
from goldcorrect.harness import SweepReport, load_report
from goldcorrect.report import AuecTable, format_csv, format_table, render_report


def _record(method, fraction, index, error, repeat=0, corruption="flip"):
    record = {
        "id": f"{method}__f{fraction:g}__s{index:02d}__r{repeat}",
        "method_name": method,
        "corruption": corruption,
        "fraction": fraction,
        "strength_index": index,
        "repeat": repeat,
    }
    if error is None:
        record.update(status="failed", error={"type": "MethodError", "message": "boom"})
    else:
        record.update(status="ok", percent_error=error)
    return record


def _curve(method, fraction, errors, repeat=0, corruption="flip"):
    return [
        _record(method, fraction, index, error, repeat, corruption)
        for index, error in enumerate(errors)
    ]


def _report(*curves):
    return SweepReport({}, [record for curve in curves for record in curve])


def _polyline_vertices(svg_path, gid):
    for element in ET.parse(svg_path).getroot().iter():
        if element.get("id") == gid:
            path = element.find("{http://www.w3.org/2000/svg}path")
            return len(re.findall(r"[ML]", path.get("d")))
    raise AssertionError(f"no element {gid}")


def test_single_curve_report(tmp_path):
    report = _report(_curve("glc", 0.1, [10.0] * 11))

    rendered = render_report(report, tmp_path)

    lines = rendered.table.splitlines()
    assert len(lines) == 4
    assert lines[2].split() == ["flip", "10", "**10.0**"]
    assert [path.name for path in rendered.plot_paths] == ["flip-trusted10.svg"]
    assert _polyline_vertices(rendered.plot_paths[0], "curve-glc") == 11
    assert rendered.table_path.read_text() == rendered.table
    assert rendered.csv_path.exists()


def test_table_layout():
    report = _report(
        _curve("glc", 0.1, [10.0] * 11),
        _curve("no_correction", 0.1, [10.0 * i for i in range(11)]),
    )

    assert format_table(AuecTable.from_report(report)) == (
        "Corruption  Trusted %       glc  no_correction\n"
        "----------  ---------  --------  -------------\n"
        "      flip         10  **10.0**           50.0\n"
        "      Mean                 10.0           50.0\n"
    )


def test_best_value_of_each_row_is_bold():
    report = _report(
        _curve("glc", 0.05, [20.0] * 11),
        _curve("forward", 0.05, [30.0] * 11),
        _curve("glc", 0.25, [40.0] * 11),
        _curve("forward", 0.25, [5.0] * 11),
    )
    table = AuecTable.from_report(report)

    assert table.best(("flip", 0.05)) == {"glc"}
    assert table.best(("flip", 0.25)) == {"forward"}
    lines = format_table(table).splitlines()
    assert lines[2].split() == ["flip", "5", "**20.0**", "30.0"]
    assert lines[3].split() == ["flip", "25", "40.0", "**5.0**"]


def test_ties_are_all_bold():
    report = _report(_curve("glc", 0.1, [7.0] * 11), _curve("forward", 0.1, [7.0] * 11))

    assert format_table(AuecTable.from_report(report)).count("**7.0**") == 2


def test_mean_row_averages_each_column():
    report = _report(
        _curve("glc", 0.05, [20.0] * 11),
        _curve("glc", 0.1, [10.0 * i for i in range(11)]),
        _curve("glc", 0.25, [3.0] * 10 + [103.0]),
    )
    table = AuecTable.from_report(report)
    column = [table.value(row, "glc") for row in table.rows]

    rows = list(csv.reader(io.StringIO(format_csv(table))))

    assert table.mean("glc") == pytest.approx(sum(column) / 3)
    assert rows[0] == ["corruption", "trusted_fraction", "glc"]
    assert rows[-1][:2] == ["Mean", ""]
    assert float(rows[-1][2]) == table.mean("glc")
    assert [float(row[2]) for row in rows[1:-1]] == column


def test_gaps_are_marked():
    failed = _curve("forward", 0.1, [1.0] * 11)
    failed[4] = _record("forward", 0.1, 4, None)
    report = _report(_curve("glc", 0.1, [10.0] * 11), failed)
    table = AuecTable.from_report(report)

    text = format_table(table)
    rows = list(csv.reader(io.StringIO(format_csv(table))))

    assert table.value(("flip", 0.1), "forward") is None
    assert table.mean("forward") is None
    assert text.splitlines()[2].split() == ["flip", "10", "**10.0**", "--"]
    assert text.splitlines()[3].split() == ["Mean", "10.0", "--"]
    assert rows[1][3] == ""
    assert rows[2][3] == ""


def test_partial_report_renders(tmp_path):
    failed = _curve("glc", 0.1, [1.0] * 11)
    failed[0] = _record("glc", 0.1, 0, None)

    rendered = render_report(_report(failed), tmp_path)

    assert "--" in rendered.table
    assert len(rendered.plot_paths) == 1


def test_seed_band(tmp_path):
    report = _report(
        _curve("glc", 0.1, [10.0] * 11, repeat=0),
        _curve("glc", 0.1, [20.0] * 11, repeat=1),
    )

    rendered = render_report(report, tmp_path)

    ids = {element.get("id") for element in ET.parse(rendered.plot_paths[0]).getroot().iter()}
    assert {"band-glc", "curve-glc"} <= ids
    assert report.curves()[0].means == (15.0,) * 11


def test_one_plot_per_row(tmp_path):
    report = _report(
        _curve("glc", 0.05, [1.0] * 11),
        _curve("glc", 0.1, [1.0] * 11, corruption="uniform"),
    )

    rendered = render_report(report, tmp_path)

    assert sorted(path.name for path in rendered.plot_paths) == [
        "flip-trusted5.svg",
        "uniform-trusted10.svg",
    ]


def test_rendered_json_reloads_bit_exactly(tmp_path):
    report = _report(
        _curve("glc", 0.1, [1.3, 2.7, 3.1, 5.9, 8.2, 9.0, 13.3, 17.7, 23.9, 31.4, 40.6]),
        _curve("no_correction", 0.1, [1.1 * i for i in range(11)]),
    )

    rendered = render_report(report, tmp_path)

    reloaded = load_report(rendered.json_path)
    assert [s.auec for s in reloaded.curves()] == [s.auec for s in report.curves()]


def test_empty_report():
    with pytest.raises(InvalidInputError):
        render_report(SweepReport({}, []), "unused")
