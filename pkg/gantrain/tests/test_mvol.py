import struct

import numpy as np
import pytest

from gantrain.mvol import (
    HEADER_SIZE,
    KIND_GRAYSCALE,
    KIND_SEGMENTED,
    MvolError,
    read_mvol,
    write_mvol,
)


def test_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    data = rng.integers(0, 256, size=(5, 6, 7), dtype=np.uint8)
    path = tmp_path / "v.mvol"
    write_mvol(path, data, 0.065)
    back, spacing, kind = read_mvol(path)
    assert np.array_equal(back, data)
    assert spacing == 0.065
    assert kind == KIND_GRAYSCALE


def test_layout_matches_documented_bytes(tmp_path):
    # parse the header by hand against the documented fixed layout
    data = np.arange(8, dtype=np.uint8).reshape((2, 2, 2))
    path = tmp_path / "v.mvol"
    write_mvol(path, data, 0.5, KIND_SEGMENTED)
    blob = path.read_bytes()
    assert len(blob) == HEADER_SIZE + 8
    assert blob[0:4] == b"MVOL"
    version, bom = struct.unpack("<HH", blob[4:8])
    assert (version, bom) == (1, 0x0102)
    assert blob[8] == KIND_SEGMENTED
    nx, ny, nz = struct.unpack("<III", blob[12:24])
    assert (nx, ny, nz) == (2, 2, 2)
    (spacing,) = struct.unpack("<d", blob[24:32])
    assert spacing == 0.5
    # payload is x-fastest: value = 4x + 2y + z
    assert list(blob[HEADER_SIZE:]) == [0, 4, 2, 6, 1, 5, 3, 7]


def test_size_mismatch_rejected(tmp_path):
    path = tmp_path / "v.mvol"
    write_mvol(path, np.zeros((3, 3, 3), dtype=np.uint8), 0.065)
    path.write_bytes(path.read_bytes()[:-2])
    with pytest.raises(MvolError, match="payload"):
        read_mvol(path)


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "v.mvol"
    write_mvol(path, np.zeros((2, 2, 2), dtype=np.uint8), 0.065)
    blob = bytearray(path.read_bytes())
    blob[1] = 0
    path.write_bytes(bytes(blob))
    with pytest.raises(MvolError, match="magic"):
        read_mvol(path)
