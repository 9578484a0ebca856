import numpy as np
import pytest

from densecount.density import DensityMap, KernelSpec, PointAnnotationSet, generate_density_map
from densecount.errors import ParseError, ValidationError
from densecount.pnm import decode_pnm, density_to_pixels, encode_pnm, overlay, read_pnm, to_gray, write_pnm


@pytest.mark.parametrize("shape,dtype", [((5, 7), np.uint8), ((5, 7, 3), np.uint8), ((4, 3), np.uint16), ((2, 2, 3), np.uint16)])
def test_round_trip(tmp_path, shape, dtype):
    img = np.random.default_rng(1).integers(0, np.iinfo(dtype).max, shape, endpoint=True).astype(dtype)
    write_pnm(tmp_path / "x.pnm", img)
    back = read_pnm(tmp_path / "x.pnm")
    assert back.dtype == dtype and np.array_equal(back, img)


def test_header_comments():
    data = b"P5\n# a comment\n3 # width\n2\n255\n" + bytes(range(6))
    assert decode_pnm(data).tolist() == [[0, 1, 2], [3, 4, 5]]


@pytest.mark.parametrize(
    "data",
    [b"P2\n1 1\n255\n0", b"P5\n2 2\n255\n\0\0", b"P5\n2", b"P5\nx 2\n255\n\0\0\0\0", b"P5\n1 1\n0\n\0"],
)
def test_malformed(data):
    with pytest.raises(ParseError):
        decode_pnm(data)


def test_encode_rejects():
    with pytest.raises(ValidationError):
        encode_pnm(np.zeros((2, 2), np.float32))
    with pytest.raises(ValidationError):
        encode_pnm(np.zeros((2, 2, 2), np.uint8))


def test_to_gray_weights():
    px = np.array([[[255, 0, 0], [0, 255, 0], [0, 0, 255]]], np.uint8)
    np.testing.assert_allclose(to_gray(px)[0], [76.245, 149.685, 29.07])


def test_zero_map_leaves_image():
    img = np.random.default_rng(2).integers(0, 256, (6, 8, 3)).astype(np.uint8)
    assert np.array_equal(overlay(img, DensityMap.zeros(6, 8)), img)


def test_overlay_peak_at_cluster():
    pts = [(30 + dx, 10 + dy) for dx in (0, 1, 2) for dy in (0, 1, 2)] + [(5, 35)]
    dmap = generate_density_map(PointAnnotationSet("c", pts, 48, 40), KernelSpec.fixed(2.0))
    img = np.full((40, 48), 128, np.uint8)
    out = overlay(img, dmap)
    change = np.abs(out.astype(int) - 128).sum(axis=2)
    r, c = np.unravel_index(np.argmax(change), change.shape)
    assert abs(c - 31) <= 2 and abs(r - 11) <= 2
    assert np.array_equal(out, overlay(img, dmap))


def test_downscaled_map_upsamples():
    dmap = DensityMap(np.arange(6.0).reshape(2, 3), scale=0.25)
    px = density_to_pixels(dmap, 8, 12)
    assert px.shape == (8, 12) and px[7, 11] == 5.0 and px[0, 3] == 0.0
    with pytest.raises(ValidationError):
        density_to_pixels(dmap, 16, 12)
