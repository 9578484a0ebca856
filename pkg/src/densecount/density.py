"""Ground-truth density maps from point annotations.

Each annotated berry becomes a unit-mass Gaussian blob on the pixel grid, so
that summing a map recovers the annotated count. Kernel widths are either a
single fixed sigma or geometry-adaptive: ``beta`` times the mean distance to
the ``k`` nearest annotated neighbours.

Grid convention: cell ``(r, c)`` covers ``[c, c+1) x [r, r+1)`` in continuous
pixel coordinates and is sampled at its centre ``(c + 0.5, r + 0.5)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np
from scipy.spatial import cKDTree

from ._raster import render_points
from .errors import InsufficientNeighbors, OutOfBounds, ValidationError

MIN_SIGMA = 0.5  # px; keeps near-duplicate annotations rasterizable

# extra neighbours fetched from the kd-tree beyond k+1, so ulp-level
# disagreements between tree distances and ours cannot change the chosen set
_KNN_SLACK = 4


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class PointAnnotationSet:
    """Berry centres for one image, in continuous pixel coordinates."""

    image_id: str
    points: np.ndarray
    width: int
    height: int
    variety: str = ""

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64).reshape(-1, 2)
        if self.width <= 0 or self.height <= 0:
            raise ValidationError(
                f"image {self.image_id!r}: dimensions must be positive, got {self.width}x{self.height}"
            )
        bad = ~(
            np.isfinite(pts).all(axis=1)
            & (pts[:, 0] >= 0)
            & (pts[:, 0] < self.width)
            & (pts[:, 1] >= 0)
            & (pts[:, 1] < self.height)
        )
        if bad.any():
            offenders = [f"#{i} ({pts[i, 0]:g}, {pts[i, 1]:g})" for i in np.flatnonzero(bad)]
            raise ValidationError(
                f"image {self.image_id!r}: points outside [0, {self.width}) x [0, {self.height})",
                offenders,
            )
        object.__setattr__(self, "points", _readonly(pts))

    def __len__(self):
        return len(self.points)


class KernelMode(str, Enum):
    FIXED = "fixed"
    ADAPTIVE = "adaptive"


@dataclass(frozen=True)
class KernelSpec:
    mode: KernelMode = KernelMode.ADAPTIVE
    sigma: float = 4.0
    k: int = 3
    beta: float = 0.3
    fallback_sigma: float = 15.0
    truncation_radius: float = 4.0

    def __post_init__(self):
        object.__setattr__(self, "mode", KernelMode(self.mode))
        problems = []
        if not self.sigma > 0:
            problems.append(f"sigma={self.sigma} (must be > 0)")
        if not self.fallback_sigma > 0:
            problems.append(f"fallback_sigma={self.fallback_sigma} (must be > 0)")
        if not self.beta > 0:
            problems.append(f"beta={self.beta} (must be > 0)")
        if int(self.k) != self.k or self.k < 1:
            problems.append(f"k={self.k} (must be an integer >= 1)")
        if not self.truncation_radius >= 1:
            problems.append(f"truncation_radius={self.truncation_radius} (must be >= 1)")
        if problems:
            raise ValidationError("invalid kernel spec", problems)

    @classmethod
    def fixed(cls, sigma: float, truncation_radius: float = 4.0) -> "KernelSpec":
        return cls(mode=KernelMode.FIXED, sigma=sigma, truncation_radius=truncation_radius)

    @classmethod
    def adaptive(
        cls, k: int = 3, beta: float = 0.3, fallback_sigma: float = 15.0, truncation_radius: float = 4.0
    ) -> "KernelSpec":
        return cls(
            mode=KernelMode.ADAPTIVE,
            k=k,
            beta=beta,
            fallback_sigma=fallback_sigma,
            truncation_radius=truncation_radius,
        )


@dataclass(frozen=True, eq=False)
class DensityMap:
    """Non-negative count density on a grid.

    ``scale`` is grid cells per source pixel along each axis: 1.0 for ground
    truth, ``1/f`` after ``downsample(.., f)``.
    """

    values: np.ndarray
    scale: float = 1.0

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.float64)
        if vals.ndim != 2:
            raise ValidationError(f"density map must be 2-D, got shape {vals.shape}")
        if not np.isfinite(vals).all():
            raise ValidationError("density map contains non-finite values")
        if (vals < 0).any():
            raise ValidationError(f"density map has {int((vals < 0).sum())} negative cells")
        if not (math.isfinite(self.scale) and self.scale > 0):
            raise ValidationError(f"scale must be positive and finite, got {self.scale}")
        object.__setattr__(self, "values", _readonly(vals))
        object.__setattr__(self, "scale", float(self.scale))

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @classmethod
    def zeros(cls, rows: int, cols: int, scale: float = 1.0) -> "DensityMap":
        return cls(np.zeros((rows, cols)), scale)


# ---------------------------------------------------------------------------
# nearest-neighbour statistics


def _canonical_dist(dx, dy):
    # one fixed formula so every route produces bit-identical distances
    return np.sqrt(dx * dx + dy * dy)


def _brute_row(pts: np.ndarray, i: int, k: int) -> float:
    d = _canonical_dist(pts[:, 0] - pts[i, 0], pts[:, 1] - pts[i, 1])
    d[i] = np.inf
    nearest = np.partition(d, k - 1)[:k]
    return math.fsum(nearest) / k


def knn_mean_distances(points, k: int, indices: Sequence[int] | None = None) -> np.ndarray:
    """Mean distance from each point to its ``k`` nearest *other* points.

    Entries are NaN where fewer than ``k`` other points exist. The query point
    is excluded by index, so coincident duplicates still count as neighbours
    at distance 0.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    n = len(pts)
    idx_q = np.arange(n) if indices is None else np.asarray(indices, dtype=np.intp).reshape(-1)
    out = np.full(len(idx_q), np.nan)
    if n - 1 < k or len(idx_q) == 0:
        return out

    m = min(n, k + 1 + _KNN_SLACK)
    _, nbr = cKDTree(pts).query(pts[idx_q], k=m)
    nbr = nbr.reshape(len(idx_q), m)
    diff = pts[nbr] - pts[idx_q][:, None, :]
    d = _canonical_dist(diff[..., 0], diff[..., 1])
    farthest = d[:, -1].copy()
    d[nbr == idx_q[:, None]] = np.inf
    d.sort(axis=1)
    for row, i in enumerate(idx_q):
        kth = d[row, k - 1]
        # an unfetched point is at least as far as the farthest fetched one
        # (up to a few ulp of tree rounding); otherwise recompute exhaustively
        if m == n or kth < farthest[row] * (1.0 - 1e-9):
            out[row] = math.fsum(d[row, :k]) / k
        else:
            out[row] = _brute_row(pts, int(i), k)
    return out


def knn_mean_distance(points, index: int, k: int) -> float:
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if not 0 <= index < len(pts):
        raise IndexError(f"index {index} out of range for {len(pts)} points")
    if len(pts) - 1 < k:
        raise InsufficientNeighbors(f"need {k} neighbours, only {len(pts) - 1} other points")
    return float(knn_mean_distances(pts, k, [index])[0])


def adaptive_sigmas(annotations: PointAnnotationSet, spec: KernelSpec) -> np.ndarray:
    """Per-point ``beta * mean kNN distance``, floored at ``MIN_SIGMA``.

    Points without ``k`` neighbours get ``spec.fallback_sigma``.
    """
    if spec.mode is not KernelMode.ADAPTIVE:
        raise ValueError("adaptive_sigmas requires an adaptive kernel spec")
    dbar = knn_mean_distances(annotations.points, spec.k)
    sigmas = spec.beta * dbar
    sigmas[np.isnan(sigmas)] = spec.fallback_sigma
    return np.maximum(sigmas, MIN_SIGMA)


def point_sigmas(annotations: PointAnnotationSet, spec: KernelSpec) -> np.ndarray:
    if spec.mode is KernelMode.FIXED:
        return np.full(len(annotations), float(spec.sigma))
    return adaptive_sigmas(annotations, spec)


# ---------------------------------------------------------------------------
# rasterization


def gaussian_footprint(center, sigma: float, shape: tuple[int, int], truncation_radius: float = 4.0):
    """Unit-mass kernel weights for one point, clipped to the grid.

    Returns ``(row0, col0, weights)``; ``weights`` sums to 1 over the cells it
    covers. Support is the disc of radius ``truncation_radius * sigma`` around
    the centre. If that disc contains no cell centre the whole mass goes to
    the cell holding the point.
    """
    x, y = float(center[0]), float(center[1])
    rows, cols = shape
    if not (0 <= x < cols and 0 <= y < rows):
        raise OutOfBounds(f"centre ({x:g}, {y:g}) outside {cols}x{rows} grid")
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")

    radius = truncation_radius * sigma
    c0 = max(math.ceil(x - 0.5 - radius), 0)
    c1 = min(math.floor(x - 0.5 + radius), cols - 1)
    r0 = max(math.ceil(y - 0.5 - radius), 0)
    r1 = min(math.floor(y - 0.5 + radius), rows - 1)
    if c1 >= c0 and r1 >= r0:
        dx = np.arange(c0, c1 + 1) + 0.5 - x
        dy = np.arange(r0, r1 + 1) + 0.5 - y
        d2 = np.add.outer(dy * dy, dx * dx)
        w = np.exp(d2 * (-0.5 / (sigma * sigma)))
        w[d2 > radius * radius] = 0.0
        z = w.sum()
        if z > 0:
            return r0, c0, w / z
    return int(y), int(x), np.ones((1, 1))


def render_gaussian(grid: np.ndarray, center, sigma: float, truncation_radius: float = 4.0) -> np.ndarray:
    """Add one unit-mass kernel into ``grid`` in place and return it."""
    r0, c0, w = gaussian_footprint(center, sigma, grid.shape, truncation_radius)
    grid[r0 : r0 + w.shape[0], c0 : c0 + w.shape[1]] += w
    return grid


def generate_density_map(annotations: PointAnnotationSet, spec: KernelSpec) -> DensityMap:
    """Superpose one unit-mass kernel per annotated point."""
    sigmas = point_sigmas(annotations, spec)
    pts = annotations.points
    grid = np.zeros((annotations.height, annotations.width))
    render_points(grid, pts[:, 0].copy(), pts[:, 1].copy(), sigmas.astype(np.float64), float(spec.truncation_radius))
    return DensityMap(grid, 1.0)


def integrate(dmap: DensityMap) -> float:
    return float(np.sum(dmap.values))


def downsample(dmap: DensityMap, factor: int) -> DensityMap:
    """Sum-pool ``factor x factor`` blocks; ragged edge blocks are pooled as-is."""
    if int(factor) != factor or factor < 1:
        raise ValueError(f"factor must be a positive integer, got {factor}")
    factor = int(factor)
    if factor == 1:
        return dmap
    rows, cols = dmap.shape
    out_r, out_c = -(-rows // factor), -(-cols // factor)
    padded = np.zeros((out_r * factor, out_c * factor))
    padded[:rows, :cols] = dmap.values
    pooled = padded.reshape(out_r, factor, out_c, factor).sum(axis=(1, 3))
    return DensityMap(pooled, dmap.scale / factor)
