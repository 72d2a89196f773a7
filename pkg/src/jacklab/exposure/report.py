"""Variation and ranking reports over exposure snapshots."""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass
from fractions import Fraction

from jacklab.exposure.errors import EmptyDataset, MissingBaseline, ZeroBaseline
from jacklab.exposure.records import ExposureRecord


def round_half_away(value: Fraction) -> int:
    """Nearest integer, halves rounded away from zero."""
    magnitude = abs(value)
    whole = int(magnitude)
    if magnitude - whole >= Fraction(1, 2):
        whole += 1
    return whole if value >= 0 else -whole


def percent_change(old: int, new: int) -> Fraction:
    return Fraction(100 * (new - old), old)


@dataclass(frozen=True)
class VariationRow:
    country: str
    gdp_rank: int
    old_count: int
    new_count: int
    variation_pct: int


@dataclass(frozen=True)
class VariationReport:
    port: int
    old_label: str
    new_label: str
    rows: list[VariationRow]
    old_total: int
    new_total: int
    total_variation_pct: int
    average_variation_pct: int


def _for_port(dataset, port: int) -> dict[str, ExposureRecord]:
    by_country: dict[str, ExposureRecord] = {}
    for rec in dataset:
        if rec.port != port:
            continue
        if rec.country in by_country:
            raise ValueError(f"dataset holds more than one snapshot of {rec.country} on port {port}")
        by_country[rec.country] = rec
    return by_country


def _label(records) -> str:
    labels = sorted({r.snapshot_label for r in records})
    return "/".join(labels)


def variation_report(old, new, port: int) -> VariationReport:
    """Per-country percentage change from ``old`` to ``new`` on ``port``.

    The total compares the summed counts; the average is the mean of the
    unrounded per-country changes, rounded once at the end.
    """
    before, after = _for_port(old, port), _for_port(new, port)
    if not after:
        raise EmptyDataset(f"newer dataset has no rows for port {port}")
    rows, exact = [], []
    for rec in sorted(after.values(), key=lambda r: (r.gdp_rank, r.country)):
        base = before.get(rec.country)
        if base is None:
            raise MissingBaseline(f"{rec.country} has no baseline on port {port}")
        if base.count == 0:
            raise ZeroBaseline(f"{rec.country} has a zero baseline on port {port}")
        change = percent_change(base.count, rec.count)
        exact.append(change)
        rows.append(VariationRow(rec.country, rec.gdp_rank, base.count, rec.count, round_half_away(change)))
    old_total = sum(r.old_count for r in rows)
    new_total = sum(r.new_count for r in rows)
    return VariationReport(
        port,
        _label(before[r.country] for r in rows),
        _label(after.values()),
        rows,
        old_total,
        new_total,
        round_half_away(percent_change(old_total, new_total)),
        round_half_away(sum(exact, Fraction(0)) / len(exact)),
    )


def ranking(dataset, port: int) -> list[tuple[str, int]]:
    """(country, count) pairs for ``port``, largest first, ties alphabetical."""
    rows = [(r.country, r.count) for r in _for_port(dataset, port).values()]
    if not rows:
        raise EmptyDataset(f"no rows for port {port}")
    return sorted(rows, key=lambda item: (-item[1], item[0]))


def plot_data(pairs) -> str:
    return "".join(f"{country}\t{count}\n" for country, count in pairs)


def ranking_emit(dataset, port: int, path: str | os.PathLike | None = None) -> list[tuple[str, int]]:
    """Sorted ranking, also written as ``country<TAB>count`` lines when ``path`` is given."""
    pairs = ranking(dataset, port)
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(plot_data(pairs))
    return pairs


def _signed(pct: int) -> str:
    return f"{pct:+d}%"


def format_variation_table(report: VariationReport) -> str:
    header = ("GDP", "Country", report.old_label, report.new_label, "Variation")
    body = [(str(r.gdp_rank), r.country, str(r.old_count), str(r.new_count), _signed(r.variation_pct)) for r in report.rows]
    footer = [
        ("", "Total", str(report.old_total), str(report.new_total), _signed(report.total_variation_pct)),
        ("", "Average", "", "", _signed(report.average_variation_pct)),
    ]
    table = [header] + body + footer
    widths = [max(len(row[i]) for row in table) for i in range(len(header))]

    def line(row):
        cells = [row[0].rjust(widths[0]), row[1].ljust(widths[1])]
        cells += [cell.rjust(w) for cell, w in zip(row[2:], widths[2:])]
        return "  ".join(cells).rstrip()

    rule = "-" * len(line(header))
    return "\n".join([line(header), rule] + [line(r) for r in body] + [rule] + [line(r) for r in footer]) + "\n"


def variation_csv(report: VariationReport) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["gdp_rank", "country", "old_count", "new_count", "variation_pct"])
    for r in report.rows:
        writer.writerow([r.gdp_rank, r.country, r.old_count, r.new_count, r.variation_pct])
    writer.writerow(["", "Total", report.old_total, report.new_total, report.total_variation_pct])
    writer.writerow(["", "Average", "", "", report.average_variation_pct])
    return out.getvalue()


def format_ranking_table(pairs) -> str:
    width = max(len(c) for c, _ in pairs)
    digits = max(len(str(n)) for _, n in pairs)
    return "".join(f"{i:>2}  {c.ljust(width)}  {n:>{digits}}\n" for i, (c, n) in enumerate(pairs, 1))


def ranking_csv(pairs) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["country", "count"])
    writer.writerows(pairs)
    return out.getvalue()
