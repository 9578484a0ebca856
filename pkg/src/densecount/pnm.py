"""Binary PGM (P5) / PPM (P6) reading and writing, plus density overlays."""

from __future__ import annotations

import os

import numpy as np

from .density import DensityMap
from .errors import ParseError, ValidationError


def _header_tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    """Read ``count`` whitespace-separated header tokens, skipping comments.

    Returns the tokens and the offset of the raster (one whitespace byte after
    the last token).
    """
    tokens = []
    pos = 0
    n = len(data)
    while len(tokens) < count:
        while pos < n and data[pos : pos + 1].isspace():
            pos += 1
        if pos < n and data[pos : pos + 1] == b"#":
            while pos < n and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ParseError("truncated PNM header")
        tokens.append(data[start:pos])
    return tokens, pos + 1


def decode_pnm(data: bytes, source: str = "<bytes>") -> np.ndarray:
    try:
        (magic, w, h, maxval), offset = _header_tokens(data, 4)
        width, height, maxval = int(w), int(h), int(maxval)
    except (ParseError, ValueError) as exc:
        raise ParseError(f"{source}: bad PNM header ({exc})") from None
    if magic not in (b"P5", b"P6"):
        raise ParseError(f"{source}: only binary P5/P6 supported, got {magic!r}")
    if not 0 < maxval < 65536:
        raise ParseError(f"{source}: maxval {maxval} out of range")
    channels = 3 if magic == b"P6" else 1
    dtype = np.dtype(np.uint8) if maxval < 256 else np.dtype(">u2")
    size = width * height * channels * dtype.itemsize
    raster = data[offset : offset + size]
    if len(raster) != size:
        raise ParseError(f"{source}: raster truncated ({len(raster)} of {size} bytes)")
    img = np.frombuffer(raster, dtype=dtype).astype(dtype.newbyteorder("="))
    shape = (height, width, 3) if channels == 3 else (height, width)
    return img.reshape(shape)


def read_pnm(path: str | os.PathLike) -> np.ndarray:
    with open(path, "rb") as fh:
        return decode_pnm(fh.read(), os.fspath(path))


def encode_pnm(img: np.ndarray) -> bytes:
    img = np.asarray(img)
    if img.ndim == 3 and img.shape[2] == 1:
        img = img[:, :, 0]
    if img.ndim == 2:
        magic = b"P5"
    elif img.ndim == 3 and img.shape[2] == 3:
        magic = b"P6"
    else:
        raise ValidationError(f"cannot encode image of shape {img.shape}")
    if img.dtype == np.uint8:
        maxval, raster = 255, img.tobytes()
    elif img.dtype == np.uint16:
        maxval, raster = 65535, img.astype(">u2").tobytes()
    else:
        raise ValidationError(f"unsupported pixel type {img.dtype}; use uint8 or uint16")
    h, w = img.shape[:2]
    return magic + f"\n{w} {h}\n{maxval}\n".encode("ascii") + raster


def write_pnm(path: str | os.PathLike, img: np.ndarray) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_pnm(img))


def to_gray(img: np.ndarray) -> np.ndarray:
    """Float luma (BT.601 weights) in the image's own value range."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        return img
    return img[..., 0] * 0.299 + img[..., 1] * 0.587 + img[..., 2] * 0.114


def to_rgb8(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img)
    if img.dtype == np.uint16:
        img = (img.astype(np.uint32) * 255 + 32767) // 65535
    img = img.astype(np.uint8)
    if img.ndim == 2:
        img = np.repeat(img[:, :, None], 3, axis=2)
    return img


def density_to_pixels(dmap: DensityMap, height: int, width: int) -> np.ndarray:
    """Nearest-cell upsampling of a (possibly downscaled) map to image size."""
    if abs(dmap.rows - height * dmap.scale) >= 1 or abs(dmap.cols - width * dmap.scale) >= 1:
        raise ValidationError(
            f"grid {dmap.rows}x{dmap.cols} at scale {dmap.scale:g} does not fit a {height}x{width} image"
        )
    ri = np.minimum((np.arange(height) * dmap.scale).astype(np.intp), dmap.rows - 1)
    ci = np.minimum((np.arange(width) * dmap.scale).astype(np.intp), dmap.cols - 1)
    return dmap.values[np.ix_(ri, ci)]


def overlay(img: np.ndarray, dmap: DensityMap, alpha: float = 0.6, cmap: str = "jet") -> np.ndarray:
    """Blend a heat-mapped density over an image; empty maps leave it untouched."""
    base = to_rgb8(img)
    h, w = base.shape[:2]
    dens = density_to_pixels(dmap, h, w)
    peak = dens.max() if dens.size else 0.0
    if peak <= 0:
        return base
    from matplotlib import colormaps

    level = dens / peak
    colors = colormaps[cmap](level)[..., :3] * 255.0
    a = (alpha * level)[..., None]
    blended = base * (1.0 - a) + colors * a
    out = np.clip(np.rint(blended), 0, 255).astype(np.uint8)
    out[level == 0] = base[level == 0]
    return out
