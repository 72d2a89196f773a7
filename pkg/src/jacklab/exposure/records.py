"""Exposure snapshots: per-country counts of hosts answering on a port."""

from __future__ import annotations

import csv
import io
import os
import re
from dataclasses import dataclass
from importlib import resources

from jacklab.exposure.errors import DuplicateKey, SchemaError

COLUMNS = ("country", "gdp_rank", "port", "count", "snapshot_label")
_INT = re.compile(r"[0-9]+")

FIXTURES = {
    "t1": "port9100_2019-02.csv",
    "t2": "port9100_2021-07.csv",
    "t3": "port5060_2021-07.csv",
}


@dataclass(frozen=True)
class ExposureRecord:
    country: str
    gdp_rank: int
    port: int
    count: int
    snapshot_label: str

    @property
    def key(self) -> tuple[str, int, str]:
        return (self.country, self.port, self.snapshot_label)


def _int_field(value: str, name: str, line_no: int, minimum: int) -> int:
    value = value.strip()
    if not _INT.fullmatch(value):
        raise SchemaError(line_no, f"{name} must be a plain non-negative integer, got {value!r}")
    number = int(value)
    if number < minimum:
        raise SchemaError(line_no, f"{name} must be at least {minimum}, got {number}")
    return number


def parse_exposure(text: str) -> list[ExposureRecord]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None:
        raise SchemaError(1, "missing header")
    if tuple(h.strip() for h in header) != COLUMNS:
        raise SchemaError(1, f"header must be {','.join(COLUMNS)}")
    records: list[ExposureRecord] = []
    seen: dict[tuple, int] = {}
    for row in reader:
        line_no = reader.line_num
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(COLUMNS):
            raise SchemaError(line_no, f"expected {len(COLUMNS)} fields, got {len(row)}")
        country, label = row[0].strip(), row[4].strip()
        if not country or not label:
            raise SchemaError(line_no, "country and snapshot_label must not be empty")
        rec = ExposureRecord(
            country,
            _int_field(row[1], "gdp_rank", line_no, 1),
            _int_field(row[2], "port", line_no, 0),
            _int_field(row[3], "count", line_no, 0),
            label,
        )
        if rec.key in seen:
            raise DuplicateKey(f"line {line_no}: {rec.key} already given on line {seen[rec.key]}")
        seen[rec.key] = line_no
        records.append(rec)
    return records


def load_exposure(path: str | os.PathLike) -> list[ExposureRecord]:
    """Read and validate an exposure export in ``country,gdp_rank,port,count,snapshot_label`` form."""
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_exposure(fh.read())


def fixture_path(name: str) -> str:
    """Path of a shipped snapshot, by short name (``t1``, ``t2``, ``t3``) or file name."""
    filename = FIXTURES.get(name, name)
    path = resources.files("jacklab.exposure") / "data" / filename
    if not path.is_file():
        raise FileNotFoundError(f"no shipped exposure dataset {name!r}")
    return str(path)
