"""Synthetic annotations, count lists and blob scenes with known ground truth.

Used by the self-test command and the test-suite; everything is driven by
``SplitMix64`` so a seed pins the output exactly.
"""

from __future__ import annotations

import math

import numpy as np

from .density import PointAnnotationSet
from .rng import SplitMix64


def uniform_points(n: int, width: int, height: int, rng: SplitMix64) -> np.ndarray:
    pts = np.array([(rng.random() * width, rng.random() * height) for _ in range(n)], dtype=np.float64)
    return pts.reshape(-1, 2)


def random_annotations(
    image_id: str, n: int, width: int, height: int, rng: SplitMix64, variety: str = ""
) -> PointAnnotationSet:
    return PointAnnotationSet(image_id, uniform_points(n, width, height, rng), width, height, variety)


def counts_with_stats(n: int, lo: int, hi: int, total: int, rng: SplitMix64) -> list[int]:
    """``n`` integer counts with exactly the given min, max and sum."""
    if n == 1:
        if not lo == hi == total:
            raise ValueError("a single image needs lo == hi == total")
        return [total]
    if not (lo <= hi and n * lo <= total - (hi - lo) and total <= n * hi - (hi - lo)):
        raise ValueError(f"no {n} counts in [{lo}, {hi}] sum to {total}")
    counts = [lo, hi] + [lo] * (n - 2)
    remaining = total - sum(counts)
    while remaining > 0:
        slot = 2 + rng.below(n - 2)
        room = hi - counts[slot]
        if room == 0:
            continue
        step = min(remaining, 1 + rng.below(room))
        counts[slot] += step
        remaining -= step
    # shuffle so min/max are not always the first two images
    rng.shuffle(counts)
    return counts


def blob_scene(
    n: int,
    sigma: float,
    rng: SplitMix64,
    min_separation: float | None = None,
    background: float = 200.0,
    depth: float = 150.0,
    margin: int | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Dark Gaussian blobs on a light background, as a uint8 grayscale image.

    Centres sit on a jittered lattice so any two are at least
    ``min_separation`` apart (default 6 sigma). Returns ``(image, centres)``
    with centres in continuous pixel coordinates.
    """
    if min_separation is None:
        min_separation = 6.0 * sigma
    if margin is None:
        margin = int(math.ceil(4 * sigma)) + 2
    jitter = 0.25 * min_separation
    cell = min_separation + 2 * jitter
    side = max(1, math.ceil(math.sqrt(n * 1.3)))
    size = int(math.ceil(side * cell)) + 2 * margin
    slots = list(range(side * side))
    rng.shuffle(slots)
    centres = []
    for s in sorted(slots[:n]):
        gy, gx = divmod(s, side)
        x = margin + (gx + 0.5) * cell + rng.uniform(-jitter, jitter)
        y = margin + (gy + 0.5) * cell + rng.uniform(-jitter, jitter)
        centres.append((x, y))
    centres = np.array(centres, dtype=np.float64).reshape(-1, 2)
    return render_blobs(size, size, centres, sigma, background, depth), centres


def render_blobs(height, width, centres, sigma, background=200.0, depth=150.0) -> np.ndarray:
    yy, xx = np.mgrid[0:height, 0:width] + 0.5
    img = np.full((height, width), float(background))
    reach = 5 * sigma
    for x, y in np.asarray(centres).reshape(-1, 2):
        r0, r1 = max(int(y - reach), 0), min(int(y + reach) + 1, height)
        c0, c1 = max(int(x - reach), 0), min(int(x + reach) + 1, width)
        d2 = (xx[r0:r1, c0:c1] - x) ** 2 + (yy[r0:r1, c0:c1] - y) ** 2
        img[r0:r1, c0:c1] -= depth * np.exp(-d2 / (2 * sigma * sigma))
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)
