"""Grape yield models and historical weight series.

Yield is mass per surface unit:

* bunch model: vines/unit x bunches/vine x mean bunch weight
* berry model: vines/unit x bunches/vine x berries/bunch x mean berry weight
* panoramic:   total counted berries x mean berry weight

All weights are grams.
"""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Mapping

from .errors import EmptyInput, ParseError, ValidationError

GRAMS_PER_KG = 1000.0
GRAMS_PER_QUINTAL = 100_000.0


def yield_eq1(vines_per_unit: float, bunches_per_vine: float, bunch_weight: float) -> float:
    _nonneg(vines_per_unit=vines_per_unit, bunches_per_vine=bunches_per_vine, bunch_weight=bunch_weight)
    return vines_per_unit * bunches_per_vine * bunch_weight


def yield_eq2(
    vines_per_unit: float, bunches_per_vine: float, berries_per_bunch: float, berry_weight: float
) -> float:
    _nonneg(
        vines_per_unit=vines_per_unit,
        bunches_per_vine=bunches_per_vine,
        berries_per_bunch=berries_per_bunch,
        berry_weight=berry_weight,
    )
    return vines_per_unit * bunches_per_vine * berries_per_bunch * berry_weight


def yield_panoramic(total_berries: float, berry_weight: float) -> float:
    _nonneg(total_berries=total_berries, berry_weight=berry_weight)
    return total_berries * berry_weight


def _nonneg(**values):
    bad = [f"{k}={v}" for k, v in values.items() if not (math.isfinite(v) and v >= 0)]
    if bad:
        raise ValidationError("yield inputs must be finite and >= 0", bad)


@dataclass(frozen=True)
class HistoricalSeries:
    """Per-year weights for one variety; ``None`` marks a missing year."""

    variety: str
    values: Mapping[int, float | None]

    def __post_init__(self):
        bad = [f"{y}: {v}" for y, v in self.values.items() if v is not None and not v > 0]
        if bad:
            raise ValidationError(f"{self.variety}: weights must be positive", bad)

    def present(self) -> list[float]:
        return [v for _, v in sorted(self.values.items()) if v is not None]

    def latest(self) -> tuple[int, float]:
        for year in sorted(self.values, reverse=True):
            if self.values[year] is not None:
                return year, self.values[year]
        raise EmptyInput(f"{self.variety}: no recorded weights")


def pct_mean_deviation(series: HistoricalSeries | list[float]) -> float:
    """Relative year-to-year spread of a weight series, as a fraction.

    Mean absolute deviation about the mean, divided by the median of the
    recorded years. Missing years are skipped.
    """
    values = series.present() if isinstance(series, HistoricalSeries) else [v for v in series if v is not None]
    if not values:
        raise EmptyInput("series has no recorded values")
    center = statistics.fmean(values)
    spread = math.fsum(abs(v - center) for v in values) / len(values)
    return spread / statistics.median(values)


def parse_series_table(text: str, source: str = "<table>") -> dict[str, HistoricalSeries]:
    """Parse ``variety<TAB>year...`` tables; ``-`` marks a missing value."""
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise ParseError(f"{source}: empty table")
    header = lines[0].split("\t")
    try:
        years = [int(y) for y in header[1:]]
    except ValueError:
        raise ParseError(f"{source}:1: header years must be integers") from None
    out = {}
    for lineno, line in enumerate(lines[1:], start=2):
        fields = line.split("\t")
        if len(fields) != len(header):
            raise ParseError(f"{source}:{lineno}: expected {len(header)} fields, got {len(fields)}")
        variety = fields[0].strip()
        vals = {}
        for year, cell in zip(years, fields[1:]):
            cell = cell.strip()
            if cell == "-":
                vals[year] = None
                continue
            try:
                vals[year] = float(cell)
            except ValueError:
                raise ParseError(f"{source}:{lineno}: bad weight {cell!r} for {year}") from None
        out[variety] = HistoricalSeries(variety, vals)
    return out


@lru_cache(maxsize=None)
def _bundled(name: str) -> dict[str, HistoricalSeries]:
    text = resources.files("densecount").joinpath("data", name).read_text(encoding="utf-8")
    return parse_series_table(text, name)


def bundled_tables() -> dict[str, dict[str, HistoricalSeries]]:
    """Historical Trentino weights: ``cluster_weight`` (g per bunch, 2013-2018)
    and ``berry_weight`` (g per berry, 2016-2018)."""
    return {
        "cluster_weight": dict(_bundled("cluster_weight.tsv")),
        "berry_weight": dict(_bundled("berry_weight.tsv")),
    }


def lookup_weight(table: str, variety: str, year: int | None = None) -> tuple[str, int, float]:
    """Find a bundled weight by variety (case-insensitive) and year.

    Without a year the latest recorded one is used. Returns the canonical
    variety name, the year and the weight.
    """
    tables = bundled_tables()
    if table not in tables:
        raise KeyError(f"unknown table {table!r}; available: {', '.join(tables)}")
    rows = tables[table]
    match = {k.lower(): k for k in rows}.get(variety.strip().lower())
    if match is None:
        raise KeyError(f"unknown variety {variety!r} in {table}; available: {', '.join(rows)}")
    series = rows[match]
    if year is None:
        year, weight = series.latest()
        return match, year, weight
    weight = series.values.get(year)
    if weight is None:
        years = [str(y) for y, v in sorted(series.values.items()) if v is not None]
        raise KeyError(f"no {table} for {match} in {year}; available years: {', '.join(years)}")
    return match, year, weight
