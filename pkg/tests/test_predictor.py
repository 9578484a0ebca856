import json

import numpy as np
import pytest

from densecount.dataset import PatchSpec, crop_density, crop_points, patch_stream
from densecount.density import DensityMap, KernelSpec, generate_density_map, integrate
from densecount.dgrd import to_bytes
from densecount.errors import ConfigError, ValidationError
from densecount.metrics import CountPair, evaluate
from densecount.predictor import (
    TrainingManifest,
    baseline_predict,
    check_prediction,
    detect_blobs,
    emit_training_manifest,
    oracle_predict,
)
from densecount.rng import SplitMix64
from densecount.synthetic import blob_scene, random_annotations, render_blobs

GOLDEN = __import__("pathlib").Path(__file__).parent / "golden"


def gt_maps(n, seed):
    rng = SplitMix64(seed)
    out = []
    for i in range(n):
        ann = random_annotations(f"g{i}", 20 + rng.below(100), 64, 48, rng)
        out.append((ann, generate_density_map(ann, KernelSpec.adaptive())))
    return out


# -- oracle ------------------------------------------------------------------------


def test_oracle_noise_zero_is_identity():
    for ann, gt in gt_maps(5, 1):
        pred = oracle_predict(gt, 0.0, SplitMix64(3))
        assert np.array_equal(pred.values, gt.values)


def test_oracle_zero_noise_report_is_zero():
    rng = SplitMix64(4)
    pairs = []
    for ann, gt in gt_maps(10, 2):
        pairs.append(CountPair(ann.image_id, integrate(oracle_predict(gt, 0.0, rng)), integrate(gt)))
    r = evaluate(pairs)
    assert r.mae == r.mse == r.overall_mae == r.mae_pct == r.overall_mae_pct == 0.0
    assert r.n_images == 10


def test_oracle_factor_range_and_reproducible():
    gt = DensityMap(np.ones((2, 2)))
    a = [integrate(oracle_predict(gt, 0.1, r)) / 4 for r in [SplitMix64(8)] for _ in range(500)]
    assert all(0.9 <= f <= 1.1 for f in a)
    b = [integrate(oracle_predict(gt, 0.1, r)) / 4 for r in [SplitMix64(8)] for _ in range(500)]
    assert a == b


def test_oracle_mean_abs_factor_monte_carlo():
    # E|U(-0.1, 0.1)| = 0.05
    rng = SplitMix64(77)
    gt = DensityMap(np.ones((1, 1)))
    devs = [abs(integrate(oracle_predict(gt, 0.1, rng)) - 1) for _ in range(20000)]
    assert np.mean(devs) == pytest.approx(0.05, rel=0.05)


def test_oracle_rejects_negative_noise():
    with pytest.raises(ValueError):
        oracle_predict(DensityMap.zeros(1, 1), -0.1, SplitMix64(0))


# -- baseline ----------------------------------------------------------------------


def test_baseline_counts_25_blobs():
    img, centres = blob_scene(25, 2.0, SplitMix64(12))
    dmap = baseline_predict(img)
    assert round(integrate(dmap)) == 25
    assert abs(integrate(dmap) - 25) <= 25e-6
    check_prediction(dmap, img.shape)


def test_baseline_locates_blobs():
    img, centres = blob_scene(30, 2.0, SplitMix64(5))
    found = detect_blobs(img)
    assert len(found) == 30
    for c in centres:
        assert np.min(np.hypot(*(found - c).T)) < 1.0


def test_baseline_blank_image():
    assert integrate(baseline_predict(np.full((40, 50), 200, np.uint8))) == 0.0
    assert integrate(baseline_predict(np.zeros((1, 1)))) == 0.0


def test_baseline_light_polarity():
    img, _ = blob_scene(12, 2.0, SplitMix64(9))
    assert round(integrate(baseline_predict(255 - img, polarity="light"))) == 12


def test_overlapping_blobs_undercount():
    # heavy overlap is a known failure mode: two blobs read as one
    for gap in (0.5, 1.0, 2.0):
        img = render_blobs(40, 40, [(20, 20), (20 + gap * 2.0, 20)], 2.0)
        assert round(integrate(baseline_predict(img))) == 1
    img = render_blobs(40, 40, [(14, 20), (26, 20)], 2.0)
    assert round(integrate(baseline_predict(img))) == 2


def test_baseline_deterministic_bytes():
    img, _ = blob_scene(40, 2.0, SplitMix64(3))
    assert to_bytes(baseline_predict(img)) == to_bytes(baseline_predict(img.copy()))


def test_baseline_input_checks():
    with pytest.raises(ValidationError):
        baseline_predict(np.zeros((0, 5)))
    with pytest.raises(ConfigError):
        detect_blobs(np.zeros((5, 5)), polarity="grey")


def test_check_prediction_scale():
    check_prediction(DensityMap.zeros(100, 75, scale=0.125), (800, 600))
    with pytest.raises(ValidationError):
        check_prediction(DensityMap.zeros(100, 80, scale=0.125), (800, 600))


# -- per-patch counts --------------------------------------------------------------


@pytest.mark.parametrize("per_patch", [71, 427])
def test_quarter_patches_average_quarter_count(per_patch):
    # uniform berries at four times the per-patch density; crop both the
    # points and the density map along one seeded patch stream
    ann = random_annotations("p", 4 * per_patch, 600, 800, SplitMix64(per_patch))
    dmap = generate_density_map(ann, KernelSpec.adaptive())
    rects = patch_stream(600, 800, PatchSpec(rng_seed=21), 3000)
    pts = np.mean([len(crop_points(ann, r)) for r in rects])
    mass = np.mean([integrate(crop_density(dmap, r)) for r in rects])
    assert pts == pytest.approx(per_patch, rel=0.03)
    assert mass == pytest.approx(per_patch, rel=0.03)


# -- training manifest -------------------------------------------------------------


@pytest.mark.parametrize("kind,lr,batch", [("CR1-like", 1e-5, 20), ("CR2-like", 1e-4, 4)])
def test_training_manifest_values(kind, lr, batch):
    m = emit_training_manifest(kind)
    assert (m.initial_learning_rate, m.batch_size, m.max_epochs) == (lr, batch, 200)
    assert m.optimizer == "Adam"
    assert m.frozen_layers == "first ten VGG-16 layers"
    assert [m.learning_rate(e) for e in (0, 49, 50, 100, 150)] == pytest.approx([lr, lr, lr / 10, lr / 100, lr / 1000])
    assert m.patch["fraction"] == 0.25 and m.augmentation["hflip_probability"] == 0.5
    assert m.preprocessing["resize_height"] == 800


def test_training_manifest_normalization_override():
    m = emit_training_manifest("CR1-like", (0.5, 0.5, 0.5), (0.25, 0.25, 0.25))
    doc = json.loads(m.to_text())
    assert doc["normalization"]["mean"] == [0.5, 0.5, 0.5]


def test_training_manifest_invariants():
    base = emit_training_manifest("CR1-like")
    with pytest.raises(ValidationError):
        TrainingManifest(**{**base.__dict__, "initial_learning_rate": 0.0})
    with pytest.raises(ValidationError):
        TrainingManifest(**{**base.__dict__, "batch_size": 0})
    with pytest.raises(ConfigError):
        emit_training_manifest("CR3-like")
