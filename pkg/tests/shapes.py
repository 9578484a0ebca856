"""Synthetic manifests shaped like the two vineyard datasets.

Per-variety image counts, extremes and totals follow the published
description tables; individual counts are filled in by a seeded generator.
"""

from densecount.dataset import DatasetManifest, ImageRecord
from densecount.rng import SplitMix64
from densecount.synthetic import counts_with_stats

# variety: (images, min, max, total)
CR1_VARIETIES = {
    "Chardonnay": (7, 51, 172, 733),
    "Lagrein": (9, 117, 211, 1469),
    "Marzemino": (16, 53, 244, 1837),
    "Pinot Gris": (34, 86, 322, 5131),
    "Pinot Noir": (21, 93, 269, 2982),
    "Sauvignon": (21, 42, 167, 2318),
    "Traminer": (20, 61, 207, 2536),
}
CR2_SHAPE = ("Teroldego", 17, 543, 1789, 18865)


def cr1_manifest(seed=2020):
    rng = SplitMix64(seed)
    records = []
    for variety, (n, lo, hi, total) in CR1_VARIETIES.items():
        tag = variety.lower().replace(" ", "_")
        for i, c in enumerate(counts_with_stats(n, lo, hi, total, rng)):
            records.append(ImageRecord(f"{tag}_{i:02d}", f"{tag}_{i:02d}.ppm", variety, 600, 800, c))
    return DatasetManifest("CR1-like", tuple(records), seed=seed, fold_count=5)


def cr2_manifest(seed=2020):
    variety, n, lo, hi, total = CR2_SHAPE
    counts = counts_with_stats(n, lo, hi, total, SplitMix64(seed))
    records = [ImageRecord(f"ter_{i:02d}", f"ter_{i:02d}.ppm", variety, 600, 800, c) for i, c in enumerate(counts)]
    return DatasetManifest("CR2-like", tuple(records), seed=seed, fold_count=3)
