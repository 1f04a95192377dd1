"""Minimal .mvol container I/O.

The container is a fixed 64-byte little-endian header (magic ``MVOL``,
format version, byte-order mark 0x0102, kind byte, voxel counts, spacing)
followed by one byte per voxel in x-fastest order.  This module is an
independent implementation of that format so the trainer needs no code
from the analysis toolkit.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"MVOL"
VERSION = 1
BYTE_ORDER_MARK = 0x0102
KIND_GRAYSCALE = 1
KIND_SEGMENTED = 2
HEADER_SIZE = 64
_HEADER = struct.Struct("<4sHHB3xIIId")


class MvolError(ValueError):
    pass


def read_mvol(path) -> tuple[np.ndarray, float, int]:
    """Read a volume; returns (data[x,y,z] uint8, spacing_um, kind)."""
    with open(path, "rb") as fh:
        header = fh.read(HEADER_SIZE)
        payload = fh.read()
    if len(header) < HEADER_SIZE:
        raise MvolError(f"{path}: truncated header")
    magic, version, bom, kind, nx, ny, nz, spacing = _HEADER.unpack(
        header[: _HEADER.size]
    )
    if magic != MAGIC or version != VERSION or bom != BYTE_ORDER_MARK:
        raise MvolError(f"{path}: bad magic/version/byte-order header")
    if kind not in (KIND_GRAYSCALE, KIND_SEGMENTED):
        raise MvolError(f"{path}: unknown kind {kind}")
    if len(payload) != nx * ny * nz:
        raise MvolError(
            f"{path}: payload {len(payload)} bytes, header implies {nx * ny * nz}"
        )
    data = np.frombuffer(payload, dtype=np.uint8).reshape((nx, ny, nz), order="F")
    return data.copy(), float(spacing), int(kind)


def write_mvol(path, data: np.ndarray, spacing: float, kind: int = KIND_GRAYSCALE) -> None:
    data = np.asarray(data, dtype=np.uint8)
    if data.ndim != 3:
        raise MvolError(f"expected 3D data, got shape {data.shape}")
    nx, ny, nz = data.shape
    header = _HEADER.pack(MAGIC, VERSION, BYTE_ORDER_MARK, kind, nx, ny, nz, spacing)
    header += b"\x00" * (HEADER_SIZE - len(header))
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(data.ravel(order="F").tobytes())
