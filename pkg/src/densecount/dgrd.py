"""DGRD density-grid files, the exchange format between predictors and the
evaluation harness.

Layout (all little-endian)::

    b"DGRD" | uint32 rows | uint32 cols | float32[rows*cols] row-major | float64 scale

Values are stored as float32, so writing a float64 map quantizes it; reading
back and re-writing is bit-stable.
"""

from __future__ import annotations

import os
import struct

import numpy as np

from .density import DensityMap
from .errors import ParseError

MAGIC = b"DGRD"
_HEADER = struct.Struct("<4sII")
_TRAILER = struct.Struct("<d")


def to_bytes(dmap: DensityMap) -> bytes:
    rows, cols = dmap.shape
    body = np.ascontiguousarray(dmap.values, dtype="<f4").tobytes()
    return _HEADER.pack(MAGIC, rows, cols) + body + _TRAILER.pack(dmap.scale)


def from_bytes(data: bytes, source: str = "<bytes>") -> DensityMap:
    if len(data) < _HEADER.size + _TRAILER.size:
        raise ParseError(f"{source}: truncated DGRD file ({len(data)} bytes)")
    magic, rows, cols = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise ParseError(f"{source}: bad magic {magic!r}, expected {MAGIC!r}")
    expected = _HEADER.size + 4 * rows * cols + _TRAILER.size
    if len(data) != expected:
        raise ParseError(f"{source}: {rows}x{cols} grid needs {expected} bytes, file has {len(data)}")
    values = np.frombuffer(data, dtype="<f4", count=rows * cols, offset=_HEADER.size)
    (scale,) = _TRAILER.unpack_from(data, expected - _TRAILER.size)
    return DensityMap(values.astype(np.float64).reshape(rows, cols), scale)


def quantize(dmap: DensityMap) -> DensityMap:
    """The map exactly as it will read back from a DGRD file."""
    return DensityMap(dmap.values.astype(np.float32), dmap.scale)


def write_dgrd(path: str | os.PathLike, dmap: DensityMap) -> None:
    with open(path, "wb") as fh:
        fh.write(to_bytes(dmap))


def read_dgrd(path: str | os.PathLike) -> DensityMap:
    with open(path, "rb") as fh:
        return from_bytes(fh.read(), os.fspath(path))
