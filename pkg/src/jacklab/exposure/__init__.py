"""Exposure-trend arithmetic over per-country port snapshots."""

from jacklab.exposure.errors import (
    DuplicateKey,
    EmptyDataset,
    ExposureError,
    MissingBaseline,
    SchemaError,
    ZeroBaseline,
)
from jacklab.exposure.records import ExposureRecord, fixture_path, load_exposure, parse_exposure
from jacklab.exposure.report import (
    VariationReport,
    VariationRow,
    format_ranking_table,
    format_variation_table,
    percent_change,
    plot_data,
    ranking,
    ranking_csv,
    ranking_emit,
    round_half_away,
    variation_csv,
    variation_report,
)

__all__ = [
    "DuplicateKey",
    "EmptyDataset",
    "ExposureError",
    "ExposureRecord",
    "MissingBaseline",
    "SchemaError",
    "VariationReport",
    "VariationRow",
    "ZeroBaseline",
    "fixture_path",
    "format_ranking_table",
    "format_variation_table",
    "load_exposure",
    "parse_exposure",
    "percent_change",
    "plot_data",
    "ranking",
    "ranking_csv",
    "ranking_emit",
    "round_half_away",
    "variation_csv",
    "variation_report",
]
