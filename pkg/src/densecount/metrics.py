"""Counting error metrics and their aggregation.

Per-image errors (MAE, MSE) measure single-picture accuracy; the overall
error compares dataset totals, where over- and under-counts cancel. ``mse``
keeps the conventional crowd-counting name but is a root-mean-square.
Percentages are stored in percent units (``10.0`` means 10 %).
"""

from __future__ import annotations

import json
import math
import os
import statistics
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, NamedTuple

from .errors import ConfigError, EmptyInput, ParseError, ValidationError

REPORT_FIELDS = ("n_images", "n_berries", "mae", "mae_pct", "mse", "overall_mae", "overall_mae_pct")


@dataclass(frozen=True)
class CountPair:
    image_id: str
    predicted: float
    ground_truth: float
    group: str | None = None
    fold: int | None = None

    def __post_init__(self):
        if not self.ground_truth >= 0:
            raise ValidationError(f"{self.image_id}: ground truth must be >= 0, got {self.ground_truth}")
        if not math.isfinite(self.predicted):
            raise ValidationError(f"{self.image_id}: prediction is not finite")

    @property
    def error(self) -> float:
        return self.predicted - self.ground_truth


def _nonempty(pairs) -> list[CountPair]:
    pairs = list(pairs)
    if not pairs:
        raise EmptyInput("no count pairs to evaluate")
    return pairs


def mae(pairs: Iterable[CountPair]) -> float:
    pairs = _nonempty(pairs)
    return math.fsum(abs(p.error) for p in pairs) / len(pairs)


def mse(pairs: Iterable[CountPair]) -> float:
    """Root of the mean squared count error."""
    pairs = _nonempty(pairs)
    errs = [abs(p.error) for p in pairs]
    peak = max(errs)
    if peak == 0:
        return 0.0
    # scaled like hypot so tiny or huge errors neither underflow nor overflow
    return peak * math.sqrt(math.fsum((e / peak) ** 2 for e in errs) / len(errs))


rmse = mse


def overall_mae(pairs: Iterable[CountPair]) -> float:
    pairs = _nonempty(pairs)
    # one correctly rounded sum of the per-image errors, so the result never
    # exceeds the summed absolute errors that mae() is built from
    return abs(math.fsum(p.error for p in pairs))


class RelativeErrors(NamedTuple):
    mae_pct: float | None
    overall_mae_pct: float | None
    excluded_zero_gt: int


def relative_errors(pairs: Iterable[CountPair]) -> RelativeErrors:
    """Per-image mean of ``|error| / truth`` and the ratio of totals, in percent.

    Images with zero ground truth are left out of the per-image mean and
    counted in ``excluded_zero_gt``; either value is None when undefined.
    """
    pairs = _nonempty(pairs)
    usable = [p for p in pairs if p.ground_truth > 0]
    excluded = len(pairs) - len(usable)
    mae_pct = None
    if usable:
        mae_pct = 100.0 * math.fsum(abs(p.error) / p.ground_truth for p in usable) / len(usable)
    total_gt = math.fsum(p.ground_truth for p in pairs)
    overall_pct = 100.0 * overall_mae(pairs) / total_gt if total_gt > 0 else None
    return RelativeErrors(mae_pct, overall_pct, excluded)


class MeanStd(NamedTuple):
    mean: float
    std: float

    def __str__(self):
        return f"{self.mean:.2f} ± {self.std:.2f}"


@dataclass
class MetricsReport:
    n_images: int
    n_berries: float
    sum_predicted: float
    mae: float
    mae_pct: float | None
    mse: float
    overall_mae: float
    overall_mae_pct: float | None
    excluded_zero_gt: int = 0
    groups: dict[str, "MetricsReport"] | None = None
    cv: dict[str, MeanStd] | None = None

    @property
    def rmse(self) -> float:
        return self.mse

    @property
    def overall_signed_error(self) -> float:
        return self.sum_predicted - self.n_berries

    def to_dict(self) -> dict:
        doc = {k: v for k, v in asdict(self).items() if k not in ("groups", "cv")}
        doc["rmse"] = self.mse
        if self.groups is not None:
            doc["groups"] = {k: g.to_dict() for k, g in self.groups.items()}
        if self.cv is not None:
            doc["cv"] = {k: {"mean": v.mean, "std": v.std} for k, v in self.cv.items()}
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "MetricsReport":
        doc = dict(doc)
        doc.pop("rmse", None)
        groups = doc.pop("groups", None)
        cv = doc.pop("cv", None)
        report = cls(**doc)
        if groups is not None:
            report.groups = {k: cls.from_dict(g) for k, g in groups.items()}
        if cv is not None:
            report.cv = {k: MeanStd(v["mean"], v["std"]) for k, v in cv.items()}
        return report

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "MetricsReport":
        return cls.from_dict(json.loads(text))


def evaluate(pairs: Iterable[CountPair]) -> MetricsReport:
    pairs = _nonempty(pairs)
    rel = relative_errors(pairs)
    return MetricsReport(
        n_images=len(pairs),
        n_berries=math.fsum(p.ground_truth for p in pairs),
        sum_predicted=math.fsum(p.predicted for p in pairs),
        mae=mae(pairs),
        mae_pct=rel.mae_pct,
        mse=mse(pairs),
        overall_mae=overall_mae(pairs),
        overall_mae_pct=rel.overall_mae_pct,
        excluded_zero_gt=rel.excluded_zero_gt,
    )


def grouped_report(pairs: Iterable[CountPair], group_by: str = "variety") -> MetricsReport:
    """Total report with one sub-report per variety or per fold."""
    if group_by not in ("variety", "fold"):
        raise ConfigError(f"group_by must be 'variety' or 'fold', got {group_by!r}")
    pairs = _nonempty(pairs)
    attr = "group" if group_by == "variety" else "fold"
    missing = [p.image_id for p in pairs if getattr(p, attr) is None]
    if missing:
        raise ConfigError(f"{len(missing)} pair(s) lack a {group_by} label: {', '.join(missing[:10])}")
    buckets: dict[str, list[CountPair]] = {}
    for p in pairs:
        buckets.setdefault(str(getattr(p, attr)), []).append(p)
    keys = sorted(buckets, key=int) if group_by == "fold" else sorted(buckets)
    report = evaluate(pairs)
    report.groups = {k: evaluate(buckets[k]) for k in keys}
    if group_by == "fold" and len(keys) >= 2:
        report.cv = cv_aggregate(report.groups.values())
    return report


def cv_aggregate(reports: Iterable[MetricsReport]) -> dict[str, MeanStd]:
    """Across-fold mean and sample (n-1) standard deviation of each field."""
    reports = list(reports)
    if len(reports) < 2:
        raise EmptyInput("cross-fold aggregation needs at least two folds")
    out = {}
    for name in REPORT_FIELDS:
        vals = [getattr(r, name) for r in reports]
        if any(v is None for v in vals):
            continue
        vals = [float(v) for v in vals]
        out[name] = MeanStd(statistics.fmean(vals), statistics.stdev(vals))
    return out


# ---------------------------------------------------------------------------
# text layout mirroring the per-image / overall tables


def _pct(v):
    return "-" if v is None else f"{v:.2f}%"


def format_report(report: MetricsReport, title: str = "") -> str:
    out = [title] if title else []
    out.append(f"{'':<10}{'n':>10}{'MAE':>12}{'MAE (%)':>12}{'MSE':>12}")
    out.append(
        f"{'Per Image':<10}{report.n_images:>10}{report.mae:>12.2f}{_pct(report.mae_pct):>12}{report.mse:>12.2f}"
    )
    out.append(
        f"{'Overall':<10}{report.n_berries:>10.0f}{report.overall_mae:>12.2f}{_pct(report.overall_mae_pct):>12}"
    )
    if report.excluded_zero_gt:
        out.append(f"({report.excluded_zero_gt} zero-count image(s) excluded from MAE %)")
    return "\n".join(out)


def format_grouped(report: MetricsReport) -> str:
    head = (
        f"{'':<16}{'n':>6}{'MAE':>10}{'MAE (%)':>10}{'MSE':>10} |"
        f"{'N':>9}{'MAE':>10}{'MAE (%)':>10}"
    )
    lines = [head]

    def row(label, r):
        return (
            f"{label:<16}{r.n_images:>6}{r.mae:>10.2f}{_pct(r.mae_pct):>10}{r.mse:>10.2f} |"
            f"{r.n_berries:>9.0f}{r.overall_mae:>10.2f}{_pct(r.overall_mae_pct):>10}"
        )

    for key, sub in (report.groups or {}).items():
        lines.append(row(key, sub))
    lines.append(row("TOTAL", report))
    return "\n".join(lines)


def format_cv(cv: dict[str, MeanStd]) -> str:
    def cell(name, pct=False):
        if name not in cv:
            return "-"
        m, s = cv[name]
        return f"{m:.2f}% ± {s:.2f}%" if pct else f"{m:.2f} ± {s:.2f}"

    lines = [f"{'':<10}{'n':>10}{'MAE':>20}{'MAE (%)':>22}{'MSE':>20}"]
    lines.append(
        f"{'Per Image':<10}{cv['n_images'].mean:>10.1f}{cell('mae'):>20}"
        f"{cell('mae_pct', True):>22}{cell('mse'):>20}"
    )
    lines.append(
        f"{'Overall':<10}{cv['n_berries'].mean:>10.1f}{cell('overall_mae'):>20}"
        f"{cell('overall_mae_pct', True):>22}"
    )
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# predictions file: image_id<TAB>predicted_count


def parse_predictions(text: str, source: str = "<text>") -> dict[str, float]:
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 2:
            raise ParseError(f"{source}:{lineno}: expected image_id<TAB>count")
        image_id = fields[0].strip()
        try:
            value = float(fields[1])
        except ValueError:
            raise ParseError(f"{source}:{lineno}: non-numeric count {fields[1]!r}") from None
        if image_id in out:
            raise ParseError(f"{source}:{lineno}: duplicate image_id {image_id!r}")
        out[image_id] = value
    return out


def read_predictions(path: str | os.PathLike) -> dict[str, float]:
    return parse_predictions(Path(path).read_text(encoding="utf-8"), os.fspath(path))


def format_predictions(counts: dict[str, float]) -> str:
    return "".join(f"{k}\t{counts[k]!r}\n" for k in sorted(counts))


def write_predictions(path: str | os.PathLike, counts: dict[str, float]) -> None:
    Path(path).write_text(format_predictions(counts), encoding="utf-8")


def pair_up(
    predictions: dict[str, float],
    truths: dict[str, float],
    groups: dict[str, str] | None = None,
    folds: dict[str, int] | None = None,
) -> tuple[list[CountPair], list[str]]:
    """Match predictions to ground truth. Returns pairs and ids with no truth."""
    missing = sorted(set(predictions) - set(truths))
    pairs = [
        CountPair(
            i,
            predictions[i],
            truths[i],
            group=None if groups is None else groups.get(i),
            fold=None if folds is None else folds.get(i),
        )
        for i in sorted(predictions)
        if i in truths
    ]
    return pairs, missing
