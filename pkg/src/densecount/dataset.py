"""Dataset ingestion, preprocessing and cross-validation splits.

Annotation file (UTF-8 text, one block per image, blocks separated by blank
lines, ``#`` starts a comment line)::

    image_id<TAB>width<TAB>height<TAB>variety
    x<TAB>y
    x<TAB>y
    ...

Manifest file (JSON)::

    {
      "format": "densecount-manifest/1",
      "name": "CR1-like" | "CR2-like" | "custom",
      "seed": <uint64>,
      "fold_count": <int >= 2>,
      "annotations": "<annotation file, relative to the manifest>",   # optional
      "records": [
        {"image_id": str, "file_path": str, "variety": str,
         "width": int, "height": int, "annotation_count": int}, ...
      ],
      "fold_assignment": {"<image_id>": <fold index>, ...}            # optional
    }
"""

from __future__ import annotations

import dataclasses
import functools
import json
import math
import os
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple

import numpy as np

from .density import DensityMap, PointAnnotationSet
from .errors import ConfigError, OutOfBounds, ParseError, ValidationError
from .rng import SplitMix64

MANIFEST_FORMAT = "densecount-manifest/1"
DATASET_KINDS = ("CR1-like", "CR2-like", "custom")
DEFAULT_TARGET_HEIGHT = 800


@dataclass(frozen=True)
class ImageRecord:
    image_id: str
    file_path: str
    variety: str
    width: int
    height: int
    annotation_count: int

    def __post_init__(self):
        problems = []
        if self.width <= 0 or self.height <= 0:
            problems.append(f"dimensions {self.width}x{self.height}")
        if self.annotation_count < 0:
            problems.append(f"annotation_count {self.annotation_count}")
        if problems:
            raise ValidationError(f"image record {self.image_id!r} invalid", problems)


@dataclass(frozen=True, eq=False)
class DatasetManifest:
    name: str
    records: tuple[ImageRecord, ...]
    seed: int = 0
    fold_count: int = 5
    fold_assignment: Mapping[str, int] | None = None
    annotations: Mapping[str, PointAnnotationSet] | None = field(default=None, repr=False)
    annotations_path: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        if not 0 <= self.seed < 2**64:
            raise ValidationError(f"seed {self.seed} does not fit in 64 unsigned bits")
        dupes = [i for i, c in Counter(r.image_id for r in self.records).items() if c > 1]
        if dupes:
            raise ValidationError("duplicate image ids", sorted(dupes))
        if self.fold_assignment is not None:
            _check_folds(self.records, self.fold_assignment, self.fold_count)
        if self.annotations is not None:
            _check_annotations(self.records, self.annotations)

    @property
    def image_ids(self) -> list[str]:
        return [r.image_id for r in self.records]

    def record(self, image_id: str) -> ImageRecord:
        for r in self.records:
            if r.image_id == image_id:
                return r
        raise KeyError(image_id)

    def fold_sizes(self) -> list[int]:
        if self.fold_assignment is None:
            return []
        counts = Counter(self.fold_assignment.values())
        return [counts.get(f, 0) for f in range(self.fold_count)]


def _check_folds(records, assignment, fold_count):
    ids = {r.image_id for r in records}
    problems = [f"{i}: no fold" for i in sorted(ids - set(assignment))]
    problems += [f"{i}: not a record" for i in sorted(set(assignment) - ids)]
    problems += [
        f"{i}: fold {f} outside [0, {fold_count})"
        for i, f in sorted(assignment.items())
        if not (isinstance(f, int) and 0 <= f < fold_count)
    ]
    if problems:
        raise ValidationError("fold assignment is not a total map onto folds", problems)
    sizes = Counter(assignment.values())
    sizes = [sizes.get(f, 0) for f in range(fold_count)]
    if records and max(sizes) - min(sizes) > 1:
        raise ValidationError(f"fold sizes {sizes} differ by more than 1")


def _check_annotations(records, annotations):
    problems = []
    for r in records:
        ann = annotations.get(r.image_id)
        if ann is None:
            problems.append(f"{r.image_id}: no annotations")
            continue
        if (ann.width, ann.height) != (r.width, r.height):
            problems.append(
                f"{r.image_id}: annotation frame {ann.width}x{ann.height} != record {r.width}x{r.height}"
            )
        if len(ann) != r.annotation_count:
            problems.append(f"{r.image_id}: {len(ann)} points but annotation_count={r.annotation_count}")
    if problems:
        raise ValidationError("manifest and annotations disagree", problems)


# ---------------------------------------------------------------------------
# annotation files


def parse_annotations(text: str, source: str = "<text>") -> list[PointAnnotationSet]:
    blocks: list[tuple[int, list[str], list[tuple[int, float, float]]]] = []
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip("\r\n")
        stripped = line.strip()
        if stripped.startswith("#"):
            continue
        if not stripped:
            current = None
            continue
        fields = line.split("\t")
        if current is None:
            if len(fields) not in (3, 4):
                raise ParseError(
                    f"{source}:{lineno}: header needs image_id<TAB>width<TAB>height<TAB>variety, "
                    f"got {len(fields)} field(s)"
                )
            current = (lineno, fields, [])
            blocks.append(current)
            continue
        if len(fields) != 2:
            raise ParseError(f"{source}:{lineno}: point line needs x<TAB>y, got {len(fields)} field(s)")
        try:
            x, y = float(fields[0]), float(fields[1])
        except ValueError:
            raise ParseError(f"{source}:{lineno}: non-numeric coordinate in {line!r}") from None
        current[2].append((lineno, x, y))

    out = []
    seen = set()
    offenders = []
    for lineno, header, pts in blocks:
        image_id = header[0].strip()
        variety = header[3].strip() if len(header) == 4 else ""
        if not image_id:
            raise ParseError(f"{source}:{lineno}: empty image_id")
        if image_id in seen:
            raise ParseError(f"{source}:{lineno}: duplicate image_id {image_id!r}")
        seen.add(image_id)
        try:
            width, height = int(header[1]), int(header[2])
        except ValueError:
            raise ParseError(f"{source}:{lineno}: width/height must be integers") from None
        if width <= 0 or height <= 0:
            raise ParseError(f"{source}:{lineno}: width/height must be positive")
        for ln, x, y in pts:
            if not (0 <= x < width and 0 <= y < height):
                offenders.append(f"{image_id} line {ln}: ({x:g}, {y:g}) outside {width}x{height}")
        if not offenders:
            coords = np.array([(x, y) for _, x, y in pts], dtype=np.float64).reshape(-1, 2)
            out.append(PointAnnotationSet(image_id, coords, width, height, variety))
    if offenders:
        raise ValidationError(f"{source}: annotations outside image bounds", offenders)
    return out


def read_annotations(path: str | os.PathLike) -> list[PointAnnotationSet]:
    return parse_annotations(Path(path).read_text(encoding="utf-8"), os.fspath(path))


def format_annotations(sets: Iterable[PointAnnotationSet]) -> str:
    blocks = []
    for ann in sets:
        lines = [f"{ann.image_id}\t{ann.width}\t{ann.height}\t{ann.variety}"]
        lines += [f"{x!r}\t{y!r}" for x, y in ann.points.tolist()]
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"


def write_annotations(path: str | os.PathLike, sets: Iterable[PointAnnotationSet]) -> None:
    Path(path).write_text(format_annotations(sets), encoding="utf-8")


# ---------------------------------------------------------------------------
# manifests


def _field(obj, key, kind, where):
    if key not in obj:
        raise ParseError(f"{where}: missing field {key!r}")
    value = obj[key]
    if kind is int and (isinstance(value, bool) or not isinstance(value, int)):
        raise ParseError(f"{where}.{key}: expected integer, got {value!r}")
    if kind is str and not isinstance(value, str):
        raise ParseError(f"{where}.{key}: expected string, got {value!r}")
    return value


def manifest_from_dict(doc: dict, source: str = "<manifest>", base_dir: Path | None = None) -> DatasetManifest:
    if not isinstance(doc, dict):
        raise ParseError(f"{source}: top level must be an object")
    fmt = doc.get("format", MANIFEST_FORMAT)
    if fmt != MANIFEST_FORMAT:
        raise ParseError(f"{source}: unsupported format {fmt!r}")
    name = doc.get("name", "custom")
    seed = _field(doc, "seed", int, source)
    fold_count = _field(doc, "fold_count", int, source)
    raw_records = doc.get("records", [])
    if not isinstance(raw_records, list):
        raise ParseError(f"{source}.records: expected a list")
    records = []
    for i, rec in enumerate(raw_records):
        where = f"{source}: records[{i}]"
        if not isinstance(rec, dict):
            raise ParseError(f"{where}: expected an object")
        try:
            records.append(
                ImageRecord(
                    image_id=_field(rec, "image_id", str, where),
                    file_path=rec.get("file_path", ""),
                    variety=rec.get("variety", ""),
                    width=_field(rec, "width", int, where),
                    height=_field(rec, "height", int, where),
                    annotation_count=_field(rec, "annotation_count", int, where),
                )
            )
        except ValidationError as exc:
            raise ValidationError(f"{where}: {exc}") from None
    folds = doc.get("fold_assignment")
    if folds is not None and not isinstance(folds, dict):
        raise ParseError(f"{source}.fold_assignment: expected an object")

    annotations = None
    ann_path = doc.get("annotations")
    if ann_path is not None:
        resolved = Path(ann_path) if base_dir is None else base_dir / ann_path
        annotations = {a.image_id: a for a in read_annotations(resolved)}
    return DatasetManifest(
        name=name,
        records=tuple(records),
        seed=seed,
        fold_count=fold_count,
        fold_assignment=folds,
        annotations=annotations,
        annotations_path=ann_path,
    )


def load_manifest(path: str | os.PathLike) -> DatasetManifest:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    return manifest_from_dict(doc, os.fspath(path), path.parent)


def manifest_to_dict(manifest: DatasetManifest) -> dict:
    doc = {
        "format": MANIFEST_FORMAT,
        "name": manifest.name,
        "seed": manifest.seed,
        "fold_count": manifest.fold_count,
    }
    if manifest.annotations_path is not None:
        doc["annotations"] = manifest.annotations_path
    doc["records"] = [dataclasses.asdict(r) for r in manifest.records]
    if manifest.fold_assignment is not None:
        doc["fold_assignment"] = {k: manifest.fold_assignment[k] for k in sorted(manifest.fold_assignment)}
    return doc


def manifest_to_json(manifest: DatasetManifest) -> str:
    return json.dumps(manifest_to_dict(manifest), indent=2, ensure_ascii=False) + "\n"


def save_manifest(path: str | os.PathLike, manifest: DatasetManifest) -> None:
    Path(path).write_text(manifest_to_json(manifest), encoding="utf-8")


def manifest_from_annotations(
    sets: Iterable[PointAnnotationSet],
    name: str = "custom",
    seed: int = 0,
    fold_count: int = 5,
    annotations_path: str | None = None,
) -> DatasetManifest:
    sets = list(sets)
    records = [
        ImageRecord(a.image_id, "", a.variety, a.width, a.height, len(a)) for a in sets
    ]
    return DatasetManifest(
        name=name,
        records=tuple(records),
        seed=seed,
        fold_count=fold_count,
        annotations={a.image_id: a for a in sets},
        annotations_path=annotations_path,
    )


# ---------------------------------------------------------------------------
# preprocessing


def _clamp_below(values: np.ndarray, bound: float) -> np.ndarray:
    return np.minimum(values, np.nextafter(float(bound), -math.inf))


def resize_to_height(
    record: ImageRecord,
    annotations: PointAnnotationSet | None = None,
    target_height: int = DEFAULT_TARGET_HEIGHT,
) -> tuple[ImageRecord, PointAnnotationSet | None]:
    """Rescale an image record (and its points) to ``target_height`` rows.

    The new width is ``round(width * target_height / height)`` with halves
    rounded up; points are scaled per axis by ``new/old`` and clamped into the
    half-open frame.
    """
    if target_height <= 0:
        raise ValueError("target_height must be positive")
    if record.height == target_height:
        return record, annotations
    new_w = max(1, math.floor(record.width * target_height / record.height + 0.5))
    new_rec = dataclasses.replace(record, width=new_w, height=target_height)
    if annotations is None:
        return new_rec, None
    sx = new_w / record.width
    sy = target_height / record.height
    pts = annotations.points * (sx, sy)
    pts[:, 0] = _clamp_below(pts[:, 0], new_w)
    pts[:, 1] = _clamp_below(pts[:, 1], target_height)
    new_ann = PointAnnotationSet(annotations.image_id, pts, new_w, target_height, annotations.variety)
    return new_rec, new_ann


def kfold_split(manifest: DatasetManifest, fold_count: int, seed: int) -> dict[str, int]:
    """Seeded, balanced fold assignment.

    Image ids are sorted (code-point order), shuffled with Fisher-Yates driven
    by SplitMix64(seed), then dealt round-robin: position ``i`` goes to fold
    ``i % fold_count``.
    """
    ids = sorted(manifest.image_ids)
    if fold_count < 2:
        raise ConfigError(f"fold_count must be >= 2, got {fold_count}")
    if fold_count > len(ids):
        raise ConfigError(f"fold_count {fold_count} exceeds image count {len(ids)}")
    SplitMix64(seed).shuffle(ids)
    folds = {image_id: pos % fold_count for pos, image_id in enumerate(ids)}
    return {k: folds[k] for k in sorted(folds)}


def with_folds(manifest: DatasetManifest, fold_count: int, seed: int) -> DatasetManifest:
    folds = kfold_split(manifest, fold_count, seed)
    return dataclasses.replace(manifest, fold_count=fold_count, seed=seed, fold_assignment=folds)


class Rect(NamedTuple):
    x: int
    y: int
    width: int
    height: int


@dataclass(frozen=True)
class PatchSpec:
    """Quarter-area crops: half the width by half the height, rounded up."""

    rng_seed: int = 0
    fraction: float = 0.25

    def __post_init__(self):
        if self.fraction != 0.25:
            raise ValidationError("only quarter-area patches (fraction 0.25) are supported")

    @staticmethod
    def patch_size(width: int, height: int) -> tuple[int, int]:
        return -(-width // 2), -(-height // 2)


def random_patch(width: int, height: int, rng_state: int) -> tuple[Rect, int]:
    """Draw one quarter-area crop; returns the rectangle and the next rng state."""
    if width < 2 or height < 2:
        raise ValueError(f"image must be at least 2x2, got {width}x{height}")
    pw, ph = PatchSpec.patch_size(width, height)
    rng = SplitMix64(rng_state)
    x = rng.below(width - pw + 1)
    y = rng.below(height - ph + 1)
    return Rect(x, y, pw, ph), rng.state


def patch_stream(width: int, height: int, spec: PatchSpec, count: int) -> list[Rect]:
    state = spec.rng_seed
    out = []
    for _ in range(count):
        rect, state = random_patch(width, height, state)
        out.append(rect)
    return out


def _check_rect(rect: Rect, rows: int, cols: int):
    x, y, w, h = rect
    if w < 0 or h < 0 or x < 0 or y < 0 or x + w > cols or y + h > rows:
        raise OutOfBounds(f"rectangle {tuple(rect)} outside {cols}x{rows} grid")


def crop_density(dmap: DensityMap, rect: Rect) -> DensityMap:
    """Cell-exact sub-grid.

    Mass from kernels straddling the rectangle edge is lost, so the cropped
    sum can differ from the number of annotations inside the rectangle.
    """
    rect = Rect(*rect)
    _check_rect(rect, dmap.rows, dmap.cols)
    x, y, w, h = rect
    return DensityMap(dmap.values[y : y + h, x : x + w], dmap.scale)


def crop_points(annotations: PointAnnotationSet, rect: Rect) -> PointAnnotationSet:
    rect = Rect(*rect)
    _check_rect(rect, annotations.height, annotations.width)
    x, y, w, h = rect
    p = annotations.points
    inside = (p[:, 0] >= x) & (p[:, 0] < x + w) & (p[:, 1] >= y) & (p[:, 1] < y + h)
    return PointAnnotationSet(annotations.image_id, p[inside] - (x, y), w, h, annotations.variety)


@functools.singledispatch
def hflip(obj):
    raise TypeError(f"cannot flip {type(obj).__name__}")


@hflip.register
def _(dmap: DensityMap) -> DensityMap:
    return DensityMap(dmap.values[:, ::-1], dmap.scale)


@hflip.register
def _(ann: PointAnnotationSet) -> PointAnnotationSet:
    pts = ann.points.copy()
    pts[:, 0] = _clamp_below(ann.width - pts[:, 0], ann.width)
    return PointAnnotationSet(ann.image_id, pts, ann.width, ann.height, ann.variety)


# ---------------------------------------------------------------------------
# statistics


@dataclass(frozen=True)
class GroupStats:
    images: int
    min: int
    max: int
    total: int

    @property
    def mean(self) -> float:
        return self.total / self.images if self.images else 0.0

    @classmethod
    def of(cls, counts: Iterable[int]) -> "GroupStats":
        counts = list(counts)
        if not counts:
            return cls(0, 0, 0, 0)
        return cls(len(counts), min(counts), max(counts), sum(counts))


@dataclass(frozen=True)
class DatasetStats:
    by_variety: dict[str, GroupStats]
    total: GroupStats

    def table(self) -> str:
        lines = [f"{'Variety':<16}{'Images':>8}{'Min':>8}{'Max':>8}{'Mean':>10}{'Total':>9}"]

        def row(label, s):
            return f"{label:<16}{s.images:>8}{s.min:>8}{s.max:>8}{s.mean:>10.2f}{s.total:>9}"

        lines += [row(v or "(none)", s) for v, s in self.by_variety.items()]
        lines.append(row("TOTAL", self.total))
        return "\n".join(lines)


def dataset_stats(manifest: DatasetManifest | Iterable[ImageRecord]) -> DatasetStats:
    records = manifest.records if isinstance(manifest, DatasetManifest) else list(manifest)
    groups: dict[str, list[int]] = {}
    for r in records:
        groups.setdefault(r.variety, []).append(r.annotation_count)
    by_variety = {v: GroupStats.of(groups[v]) for v in sorted(groups)}
    return DatasetStats(by_variety, GroupStats.of(r.annotation_count for r in records))
