"""Predictor boundary: anything that turns an image into a density grid.

A learned counter lives outside this package and talks to it through DGRD
files. Two in-process predictors exercise the harness end to end:

* ``oracle_predict`` perturbs a ground-truth map by a random per-image factor;
* ``baseline_predict`` is a classical blob counter (normalized
  cross-correlation with a Gaussian template + non-maximum suppression).

``emit_training_manifest`` writes the hyper-parameter record an external
trainer should follow for CR1-like and CR2-like data.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Protocol

import numpy as np
from scipy.ndimage import maximum_filter, uniform_filter
from scipy.signal import fftconvolve

from .dataset import DEFAULT_TARGET_HEIGHT
from .density import DensityMap, KernelSpec, PointAnnotationSet, generate_density_map
from .errors import ConfigError, ValidationError
from .rng import SplitMix64


class Predictor(Protocol):
    name: str

    def __call__(self, image: np.ndarray) -> DensityMap: ...


def check_prediction(dmap: DensityMap, image_shape: tuple[int, int]) -> None:
    """Raise unless ``dmap`` honours the output contract for an image of this size."""
    h, w = image_shape[:2]
    if abs(dmap.rows - h * dmap.scale) >= 1 or abs(dmap.cols - w * dmap.scale) >= 1:
        raise ValidationError(
            f"predicted grid {dmap.rows}x{dmap.cols} at scale {dmap.scale:g} "
            f"does not match a {h}x{w} image"
        )


def oracle_predict(gt_map: DensityMap, noise_level: float, rng: SplitMix64) -> DensityMap:
    """Ground truth scaled by one factor drawn from U[1 - noise, 1 + noise]."""
    if not noise_level >= 0:
        raise ValueError(f"noise_level must be >= 0, got {noise_level}")
    factor = 1.0 + noise_level * (2.0 * rng.random() - 1.0)
    if noise_level > 1:
        factor = max(factor, 0.0)
    return DensityMap(gt_map.values * factor, gt_map.scale)


# ---------------------------------------------------------------------------
# classical baseline


def gaussian_template(sigma: float) -> np.ndarray:
    half = int(math.ceil(3 * sigma))
    ax = np.arange(-half, half + 1, dtype=np.float64)
    return np.exp(-(ax[:, None] ** 2 + ax[None, :] ** 2) / (2 * sigma * sigma))


def normxcorr(image: np.ndarray, template: np.ndarray, min_contrast: float = 1e-3) -> np.ndarray:
    """Zero-mean normalized cross-correlation, same size as ``image``.

    Windows whose standard deviation is below ``min_contrast`` times the
    image's value range score 0, so flat background never produces peaks.
    """
    img = np.asarray(image, dtype=np.float64)
    t = template - template.mean()
    t_norm = math.sqrt(float(np.sum(t * t)))
    th, tw = t.shape
    num = fftconvolve(img, t[::-1, ::-1], mode="same")
    size = (th, tw)
    mean = uniform_filter(img, size=size, mode="constant")
    mean_sq = uniform_filter(img * img, size=size, mode="constant")
    var = np.maximum(mean_sq - mean * mean, 0.0) * (th * tw)
    value_range = float(img.max() - img.min()) if img.size else 0.0
    floor = (min_contrast * value_range) ** 2 * (th * tw)
    out = np.zeros_like(img)
    ok = var > max(floor, 0.0) if value_range > 0 else np.zeros(img.shape, dtype=bool)
    out[ok] = num[ok] / (np.sqrt(var[ok]) * t_norm)
    return out


def detect_blobs(
    image: np.ndarray, template_sigma: float = 2.0, detection_threshold: float = 0.5, polarity: str = "dark"
) -> np.ndarray:
    """Blob centres as an ``(n, 2)`` array of ``(x, y)`` cell centres.

    Candidates are local maxima of the correlation score above the threshold;
    greedy suppression then keeps the strongest peak within ``template_sigma``.
    """
    if polarity not in ("dark", "light"):
        raise ConfigError(f"polarity must be 'dark' or 'light', got {polarity!r}")
    gray = np.asarray(image, dtype=np.float64)
    if gray.ndim != 2 or gray.size == 0:
        raise ValidationError("baseline expects a non-empty 2-D grayscale image")
    if polarity == "dark":
        gray = -gray
    score = normxcorr(gray, gaussian_template(template_sigma))
    r = max(1, int(math.ceil(template_sigma)))
    yy, xx = np.mgrid[-r : r + 1, -r : r + 1]
    footprint = xx * xx + yy * yy <= r * r
    peaks = (score == maximum_filter(score, footprint=footprint, mode="constant")) & (
        score >= detection_threshold
    )
    rows, cols = np.nonzero(peaks)
    # strongest first; ties resolved by raster order for determinism
    order = np.lexsort((cols, rows, -score[rows, cols]))
    kept: list[tuple[int, int]] = []
    r2 = template_sigma * template_sigma
    for i in order:
        y, x = rows[i], cols[i]
        if all((y - ky) ** 2 + (x - kx) ** 2 > r2 for ky, kx in kept):
            kept.append((y, x))
    kept.sort()
    return np.array([(x + 0.5, y + 0.5) for y, x in kept], dtype=np.float64).reshape(-1, 2)


def baseline_predict(
    image: np.ndarray,
    template_sigma: float = 2.0,
    detection_threshold: float = 0.5,
    polarity: str = "dark",
    image_id: str = "",
) -> DensityMap:
    gray = np.asarray(image)
    centres = detect_blobs(gray, template_sigma, detection_threshold, polarity)
    h, w = gray.shape
    ann = PointAnnotationSet(image_id, centres, w, h)
    return generate_density_map(ann, KernelSpec.fixed(template_sigma))


# ---------------------------------------------------------------------------
# training manifest

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)

_KIND_SETTINGS = {
    "CR1-like": {"initial_learning_rate": 1e-5, "batch_size": 20},
    "CR2-like": {"initial_learning_rate": 1e-4, "batch_size": 4},
}


@dataclass(frozen=True)
class TrainingManifest:
    dataset_kind: str
    optimizer: str
    initial_learning_rate: float
    lr_schedule: dict
    frozen_layers: str
    batch_size: int
    max_epochs: int
    normalization: dict
    preprocessing: dict
    patch: dict
    augmentation: dict
    checkpoint: str = "last epoch"
    notes: list = field(default_factory=list)

    def __post_init__(self):
        if not self.initial_learning_rate > 0:
            raise ValidationError("learning rate must be positive")
        if self.batch_size < 1:
            raise ValidationError("batch size must be >= 1")

    def learning_rate(self, epoch: int) -> float:
        """Step schedule: the rate at a zero-based epoch index."""
        steps = epoch // self.lr_schedule["every_epochs"]
        return self.initial_learning_rate * self.lr_schedule["factor"] ** steps

    def to_text(self) -> str:
        return json.dumps(asdict(self), indent=2) + "\n"


def emit_training_manifest(
    dataset_kind: str,
    normalization_mean: tuple[float, float, float] = IMAGENET_MEAN,
    normalization_std: tuple[float, float, float] = IMAGENET_STD,
) -> TrainingManifest:
    if dataset_kind not in _KIND_SETTINGS:
        raise ConfigError(f"dataset kind must be one of {', '.join(_KIND_SETTINGS)}, got {dataset_kind!r}")
    settings = _KIND_SETTINGS[dataset_kind]
    return TrainingManifest(
        dataset_kind=dataset_kind,
        optimizer="Adam",
        initial_learning_rate=settings["initial_learning_rate"],
        lr_schedule={"type": "step", "factor": 0.1, "every_epochs": 50},
        frozen_layers="first ten VGG-16 layers",
        batch_size=settings["batch_size"],
        max_epochs=200,
        normalization={
            "policy": "VGG-16 channel normalization",
            "mean": list(normalization_mean),
            "std": list(normalization_std),
        },
        preprocessing={"resize_height": DEFAULT_TARGET_HEIGHT, "keep_aspect": True},
        patch={"fraction": 0.25, "size": "ceil(width/2) x ceil(height/2)", "placement": "uniform random, in bounds"},
        augmentation={"hflip_probability": 0.5},
    )
