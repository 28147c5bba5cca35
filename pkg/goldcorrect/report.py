"""Renders a sweep report as an AUEC table, a CSV file, JSON and SVG error curves.

The table has one row per (corruption, trusted fraction) and one column per method.
Each cell is the area under the method's mean error curve; the lowest of each row is
wrapped in ``**`` and a final ``Mean`` row averages every column. Curves with a failed
strength have no area and show up as ``--``.
"""

import csv
import io
import logging
import math
from pathlib import Path

import attr
import matplotlib
from matplotlib.figure import Figure

from goldcorrect.errors import InvalidInputError
from goldcorrect.harness import STRENGTHS, save_report

log = logging.getLogger(__name__)

GAP = "--"


@attr.s(frozen=True)
class AuecTable:
    """AUEC values per row key and method, None marking a gap."""

    methods = attr.ib(type=tuple)
    rows = attr.ib(type=tuple)
    values = attr.ib(type=dict)

    @classmethod
    def from_report(cls, report):
        """Build the table of `report`."""
        methods = []
        rows = []
        values = {}
        for summary in report.curves():
            row = (summary.corruption, summary.fraction)
            if summary.method not in methods:
                methods.append(summary.method)
            if row not in rows:
                rows.append(row)
            values[row, summary.method] = summary.auec
        return cls(tuple(methods), tuple(rows), values)

    def value(self, row, method):
        """Return the AUEC of `method` in `row`, or None for a gap."""
        return self.values.get((row, method))

    def best(self, row):
        """Return the methods with the lowest AUEC of `row`."""
        present = {m: self.value(row, m) for m in self.methods if self.value(row, m) is not None}
        if not present:
            return set()
        lowest = min(present.values())
        return {method for method, value in present.items() if value == lowest}

    def mean(self, method):
        """Return the mean AUEC of `method` over the rows, or None if one is a gap."""
        column = [self.value(row, method) for row in self.rows]
        if any(value is None for value in column):
            return None
        return math.fsum(column) / len(column)


def _row_label(row):
    corruption, fraction = row
    return [corruption, f"{100 * fraction:g}"]


def format_table(table):
    """Return the aligned text rendering of `table`."""
    header = ["Corruption", "Trusted %", *table.methods]
    lines = [header]
    for row in table.rows:
        best = table.best(row)
        cells = []
        for method in table.methods:
            value = table.value(row, method)
            if value is None:
                cells.append(GAP)
            elif method in best:
                cells.append(f"**{value:.1f}**")
            else:
                cells.append(f"{value:.1f}")
        lines.append([*_row_label(row), *cells])
    means = [table.mean(method) for method in table.methods]
    lines.append(["Mean", "", *(GAP if m is None else f"{m:.1f}" for m in means)])

    widths = [max(len(line[column]) for line in lines) for column in range(len(header))]
    text_lines = []
    for index, line in enumerate(lines):
        text_lines.append(
            "  ".join(cell.rjust(width) for cell, width in zip(line, widths)).rstrip()
        )
        if index == 0:
            text_lines.append("  ".join("-" * width for width in widths))
    return "\n".join(text_lines) + "\n"


def format_csv(table):
    """Return `table` as CSV with full-precision values and empty cells for gaps."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["corruption", "trusted_fraction", *table.methods])
    for row in table.rows:
        values = [table.value(row, method) for method in table.methods]
        writer.writerow([*row, *("" if v is None else repr(v) for v in values)])
    means = [table.mean(method) for method in table.methods]
    writer.writerow(["Mean", "", *("" if m is None else repr(m) for m in means)])
    return buffer.getvalue()


def _plot_name(corruption, fraction):
    return f"{corruption}-trusted{100 * fraction:g}.svg"


def plot_curves(summaries, path, title):
    """Write one SVG with a polyline per method of `summaries`.

    Each polyline has an SVG group id ``curve-<method>``; the min/max band over the
    seeds is drawn behind it when there is more than one seed.
    """
    with matplotlib.rc_context({"path.simplify": False, "svg.hashsalt": "goldcorrect"}):
        figure = Figure(figsize=(6, 4))
        axes = figure.add_subplot()
        for summary in summaries:
            means = [math.nan if v is None else v for v in summary.means]
            if len(summary.repeats) > 1:
                band = axes.fill_between(
                    STRENGTHS,
                    [math.nan if v is None else v for v in summary.minimums],
                    [math.nan if v is None else v for v in summary.maximums],
                    alpha=0.2,
                )
                band.set_gid(f"band-{summary.method}")
            (line,) = axes.plot(STRENGTHS, means, label=summary.method)
            line.set_gid(f"curve-{summary.method}")
        axes.set_xlim(0.0, 1.0)
        axes.set_ylim(0.0, 100.0)
        axes.set_xlabel("Corruption strength")
        axes.set_ylabel("Test error (%)")
        axes.set_title(title)
        axes.grid(True, alpha=0.3)
        axes.legend(loc="upper left")
        figure.savefig(path, format="svg")
    log.debug("Wrote %s", path)


@attr.s(frozen=True)
class RenderedReport:
    """Paths of the rendered files and the text table."""

    table = attr.ib(type=str)
    table_path = attr.ib(type=Path)
    csv_path = attr.ib(type=Path)
    json_path = attr.ib(type=Path)
    plot_paths = attr.ib(type=tuple)


def render_report(report, out_dir):
    """Write the table, CSV, JSON and SVG plots of `report` under `out_dir`.

    Raises:
        InvalidInputError: if the report holds no cell.
    """
    if not report.cells:
        raise InvalidInputError("report", "holds no cell")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    table = AuecTable.from_report(report)
    text = format_table(table)

    table_path = out_dir / "table.txt"
    table_path.write_text(text)
    csv_path = out_dir / "table.csv"
    csv_path.write_text(format_csv(table))
    json_path = out_dir / "report.json"
    save_report(report, json_path)

    plots_dir = out_dir / "plots"
    plots_dir.mkdir(exist_ok=True)
    summaries = report.curves()
    plot_paths = []
    for corruption, fraction in table.rows:
        path = plots_dir / _plot_name(corruption, fraction)
        plot_curves(
            [s for s in summaries if (s.corruption, s.fraction) == (corruption, fraction)],
            path,
            f"{corruption} corruption, {100 * fraction:g}% trusted",
        )
        plot_paths.append(path)
    if report.failures:
        log.warning("%d failed cells are shown as gaps", len(report.failures))
    log.info("Report written to %s", out_dir)
    return RenderedReport(text, table_path, csv_path, json_path, tuple(plot_paths))
