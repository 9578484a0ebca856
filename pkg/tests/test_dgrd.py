import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from densecount.density import DensityMap, integrate
from densecount.dgrd import MAGIC, from_bytes, quantize, read_dgrd, to_bytes, write_dgrd
from densecount.errors import ParseError


def test_layout_is_little_endian():
    dmap = DensityMap(np.array([[1.0, 0.5, 0.25]]), scale=0.125)
    data = to_bytes(dmap)
    assert data[:4] == MAGIC
    assert struct.unpack_from("<II", data, 4) == (1, 3)
    assert struct.unpack_from("<3f", data, 12) == (1.0, 0.5, 0.25)
    assert struct.unpack_from("<d", data, 24) == (0.125,)
    assert len(data) == 32


def test_empty_grid():
    dmap = DensityMap(np.zeros((0, 5)))
    back = from_bytes(to_bytes(dmap))
    assert back.shape == (0, 5)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 40), st.integers(0, 40), st.integers(0, 2**32 - 1), st.floats(1e-3, 4))
def test_round_trip_bit_identical(rows, cols, seed, scale):
    vals = np.random.default_rng(seed).random((rows, cols)) * 3
    q = quantize(DensityMap(vals, scale))
    data = to_bytes(q)
    back = from_bytes(data)
    assert back.values.tobytes() == q.values.tobytes()
    assert back.scale == scale
    assert to_bytes(back) == data
    assert integrate(back) == integrate(q)


def test_file_round_trip(tmp_path):
    q = quantize(DensityMap(np.arange(12.0).reshape(3, 4) / 7))
    write_dgrd(tmp_path / "a.dgrd", q)
    assert read_dgrd(tmp_path / "a.dgrd").values.tobytes() == q.values.tobytes()


@pytest.mark.parametrize(
    "data",
    [b"", b"DGRD", b"XXXX" + bytes(16), to_bytes(DensityMap(np.ones((2, 2))))[:-1], to_bytes(DensityMap(np.ones((2, 2)))) + b"\0"],
)
def test_malformed(data):
    with pytest.raises(ParseError):
        from_bytes(data)


def test_negative_values_rejected():
    data = struct.pack("<4sII", MAGIC, 1, 1) + struct.pack("<f", -1.0) + struct.pack("<d", 1.0)
    with pytest.raises(ValueError):
        from_bytes(data)
