"""Voxel volume data model, container I/O, cropping and cube symmetries.

Volumes are stored as (nx, ny, nz) uint8 arrays indexed [x, y, z] with an
isotropic physical voxel spacing in micrometers.  On disk the payload is
written x-fastest (x innermost, z outermost), one byte per voxel, behind a
fixed 64-byte header, so that any language can parse the container without
shared code.

Phase convention for segmented volumes: 1 = pore, 2 = Ni, 3 = YSZ.
"""

from __future__ import annotations

import itertools
import struct
from dataclasses import dataclass

import numpy as np

MAGIC = b"MVOL"
FORMAT_VERSION = 1
BYTE_ORDER_MARK = 0x0102
KIND_GRAYSCALE = 1
KIND_SEGMENTED = 2
HEADER_SIZE = 64
# magic, version, byte-order mark, kind, pad, nx, ny, nz, spacing
_HEADER_STRUCT = struct.Struct("<4sHHB3xIIId")

DEFAULT_SPACING_UM = 0.065

PHASE_PORE = 1
PHASE_NI = 2
PHASE_YSZ = 3
PHASES = (PHASE_PORE, PHASE_NI, PHASE_YSZ)
PHASE_NAMES = {PHASE_PORE: "pore", PHASE_NI: "ni", PHASE_YSZ: "ysz"}


class VolumeFormatError(ValueError):
    """Raised for malformed container files, headers or payloads."""


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class GrayscaleVolume:
    """3D grid of 8-bit intensities with isotropic voxel spacing (um)."""

    data: np.ndarray
    spacing: float = DEFAULT_SPACING_UM

    def __post_init__(self):
        a = np.asarray(self.data)
        if a.ndim != 3 or min(a.shape) < 1:
            raise ValueError(f"expected a 3D array, got shape {a.shape}")
        if a.dtype != np.uint8:
            if np.any((a < 0) | (a > 255)):
                raise ValueError("intensities must lie in [0, 255]")
            a = a.astype(np.uint8)
        if not (self.spacing > 0):
            raise ValueError(f"spacing must be positive, got {self.spacing}")
        object.__setattr__(self, "data", _freeze(a))

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, type(self))
            and self.dims == other.dims
            and self.spacing == other.spacing
            and np.array_equal(self.data, other.data)
        )


@dataclass(frozen=True, eq=False)
class SegmentedVolume:
    """3D grid of phase labels {1=pore, 2=Ni, 3=YSZ}."""

    data: np.ndarray
    spacing: float = DEFAULT_SPACING_UM

    def __post_init__(self):
        a = np.asarray(self.data)
        if a.ndim != 3 or min(a.shape) < 1:
            raise ValueError(f"expected a 3D array, got shape {a.shape}")
        bad = ~np.isin(a, PHASES)
        if bad.any():
            value = int(np.asarray(a)[bad][0])
            raise VolumeFormatError(f"illegal phase label {value}; labels must be in {{1, 2, 3}}")
        if not (self.spacing > 0):
            raise ValueError(f"spacing must be positive, got {self.spacing}")
        object.__setattr__(self, "data", _freeze(a.astype(np.uint8)))

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, type(self))
            and self.dims == other.dims
            and self.spacing == other.spacing
            and np.array_equal(self.data, other.data)
        )


Volume = GrayscaleVolume | SegmentedVolume


# ---------------------------------------------------------------------------
# Container I/O
# ---------------------------------------------------------------------------

def save_volume(volume: Volume, path) -> None:
    """Write a volume to `path` in the .mvol container format.

    Layout: 64-byte little-endian header (magic ``MVOL``, format version,
    byte-order mark 0x0102, kind byte, voxel counts as u32, spacing as f64,
    zero padding) followed by one byte per voxel, x-fastest.
    """
    kind = KIND_GRAYSCALE if isinstance(volume, GrayscaleVolume) else KIND_SEGMENTED
    nx, ny, nz = volume.dims
    header = _HEADER_STRUCT.pack(
        MAGIC, FORMAT_VERSION, BYTE_ORDER_MARK, kind, nx, ny, nz, volume.spacing
    )
    header += b"\x00" * (HEADER_SIZE - len(header))
    payload = volume.data.ravel(order="F").tobytes()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)


def load_volume(path) -> Volume:
    """Read a .mvol container, validating header and payload."""
    with open(path, "rb") as fh:
        header = fh.read(HEADER_SIZE)
        payload = fh.read()
    if len(header) < HEADER_SIZE:
        raise VolumeFormatError(f"truncated header: {len(header)} bytes at byte offset 0")
    magic, version, bom, kind, nx, ny, nz, spacing = _HEADER_STRUCT.unpack(
        header[: _HEADER_STRUCT.size]
    )
    if magic != MAGIC:
        raise VolumeFormatError(f"bad magic {magic!r} at byte offset 0")
    if version != FORMAT_VERSION:
        raise VolumeFormatError(f"unsupported format version {version} at byte offset 4")
    if bom != BYTE_ORDER_MARK:
        raise VolumeFormatError(f"bad byte-order mark 0x{bom:04x} at byte offset 6")
    if kind not in (KIND_GRAYSCALE, KIND_SEGMENTED):
        raise VolumeFormatError(f"unknown volume kind {kind} at byte offset 8")
    if min(nx, ny, nz) < 1:
        raise VolumeFormatError(f"non-positive dims ({nx}, {ny}, {nz}) at byte offset 12")
    if not np.isfinite(spacing) or spacing <= 0:
        raise VolumeFormatError(f"invalid spacing {spacing} at byte offset 24")
    expected = nx * ny * nz
    if len(payload) != expected:
        raise VolumeFormatError(
            f"payload size mismatch: header dims imply {expected} bytes, found {len(payload)}"
        )
    data = np.frombuffer(payload, dtype=np.uint8).reshape((nx, ny, nz), order="F")
    if kind == KIND_GRAYSCALE:
        return GrayscaleVolume(data.copy(), spacing)
    return SegmentedVolume(data.copy(), spacing)


# ---------------------------------------------------------------------------
# Slice-stack import (binary PGM)
# ---------------------------------------------------------------------------

def _read_pgm(path) -> np.ndarray:
    """Parse a binary PGM (P5, maxval 255) into a (width, height) array."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:2] != b"P5":
        raise VolumeFormatError(f"{path}: not a binary PGM (P5) file")
    # Header tokens: width, height, maxval; '#' comments run to end of line.
    pos, tokens = 2, []
    while len(tokens) < 3:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if pos < len(raw) and raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise VolumeFormatError(f"{path}: truncated PGM header")
        tokens.append(raw[start:pos])
    pos += 1  # single whitespace byte after maxval
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError:
        raise VolumeFormatError(f"{path}: malformed PGM header tokens {tokens}") from None
    if maxval != 255:
        raise VolumeFormatError(f"{path}: unsupported PGM maxval {maxval} (need 255)")
    if width < 1 or height < 1:
        raise VolumeFormatError(f"{path}: bad PGM dimensions {width}x{height}")
    pixels = raw[pos : pos + width * height]
    if len(pixels) != width * height:
        raise VolumeFormatError(
            f"{path}: PGM payload has {len(pixels)} bytes, expected {width * height}"
        )
    # PGM is row-major top row first; transpose to [x, y].
    return np.frombuffer(pixels, dtype=np.uint8).reshape((height, width)).T.copy()


def import_slice_stack(paths, spacing: float = DEFAULT_SPACING_UM) -> GrayscaleVolume:
    """Assemble an ordered stack of 2D PGM slices into a volume; slice k -> z=k."""
    paths = list(paths)
    if not paths:
        raise ValueError("need at least one slice")
    slices = [_read_pgm(p) for p in paths]
    shape = slices[0].shape
    for p, s in zip(paths, slices):
        if s.shape != shape:
            raise VolumeFormatError(
                f"inconsistent slice dims: {p} is {s.shape[0]}x{s.shape[1]}, "
                f"expected {shape[0]}x{shape[1]}"
            )
    return GrayscaleVolume(np.stack(slices, axis=2), spacing)


# ---------------------------------------------------------------------------
# Cropping and sampling
# ---------------------------------------------------------------------------

def crop(volume: Volume, origin, shape) -> Volume:
    """Copy the axis-aligned subvolume at `origin` with voxel counts `shape`."""
    ox, oy, oz = (int(v) for v in origin)
    sx, sy, sz = (int(v) for v in shape)
    nx, ny, nz = volume.dims
    if min(sx, sy, sz) < 1:
        raise ValueError(f"crop shape must be positive, got {(sx, sy, sz)}")
    if min(ox, oy, oz) < 0 or ox + sx > nx or oy + sy > ny or oz + sz > nz:
        raise ValueError(
            f"crop origin {(ox, oy, oz)} shape {(sx, sy, sz)} exceeds dims {(nx, ny, nz)}"
        )
    block = volume.data[ox : ox + sx, oy : oy + sy, oz : oz + sz].copy()
    return type(volume)(block, volume.spacing)


# ---------------------------------------------------------------------------
# Cube symmetry group (48 ops: 24 proper rotations, x24 with a mirror)
# ---------------------------------------------------------------------------

def _build_symmetry_matrices() -> np.ndarray:
    """Enumerate the order-48 cube symmetry group as signed permutation matrices.

    Ops 0-23 are the proper rotations (det +1) enumerated lexicographically
    by (axis permutation, sign pattern) with op 0 the identity; op i+24 is
    op i composed with a mirror across x (negate the x output axis).
    """
    rotations = []
    for perm in itertools.permutations(range(3)):
        for signs in itertools.product((1, -1), repeat=3):
            m = np.zeros((3, 3), dtype=int)
            for row, (col, s) in enumerate(zip(perm, signs)):
                m[row, col] = s
            if round(np.linalg.det(m)) == 1:
                rotations.append(m)
    mirror = np.diag([-1, 1, 1])
    return np.array(rotations + [mirror @ m for m in rotations])


_SYMMETRY_MATRICES = _build_symmetry_matrices()
SYMMETRY_OP_COUNT = 48
_SYMMETRY_INDEX = {m.tobytes(): i for i, m in enumerate(_SYMMETRY_MATRICES)}


def symmetry_matrix(op: int) -> np.ndarray:
    """Signed permutation matrix of symmetry op `op` (0..47)."""
    if not 0 <= op < SYMMETRY_OP_COUNT:
        raise ValueError(f"symmetry op must be in [0, 47], got {op}")
    return _SYMMETRY_MATRICES[op].copy()

def compose_symmetry(first: int, second: int) -> int:
    """Index of the op equal to applying `first`, then `second`."""
    m = _SYMMETRY_MATRICES[second] @ _SYMMETRY_MATRICES[first]
    return _SYMMETRY_INDEX[m.astype(int).tobytes()]


def inverse_symmetry(op: int) -> int:
    """Index of the inverse of `op`."""
    m = _SYMMETRY_MATRICES[op].T  # orthogonal, so inverse = transpose
    return _SYMMETRY_INDEX[np.ascontiguousarray(m).astype(int).tobytes()]


def apply_symmetry_array(a: np.ndarray, op: int) -> np.ndarray:
    """Apply cube symmetry `op` to any cubic 3D array (copying)."""
    if a.ndim != 3 or not (a.shape[0] == a.shape[1] == a.shape[2]):
        raise ValueError(f"symmetry ops require a cubic volume, got dims {a.shape}")
    m = symmetry_matrix(op)
    # Row a of M selects source axis q[a] with sign s[a]; this is a
    # transpose followed by flips of the negated output axes.
    q = [int(np.nonzero(m[row])[0][0]) for row in range(3)]
    s = [int(m[row, q[row]]) for row in range(3)]
    out = np.transpose(a, axes=q)
    for axis in range(3):
        if s[axis] < 0:
            out = np.flip(out, axis=axis)
    return out.copy()


def apply_symmetry(volume: Volume, op: int) -> Volume:
    """Apply cube symmetry `op` to a cubic volume.

    A voxel at centered coordinate x moves to M x, where M is the op's
    signed permutation matrix; this preserves the voxel multiset exactly.
    """
    return type(volume)(apply_symmetry_array(volume.data, op), volume.spacing)


def sample_subvolumes(
    volume: Volume, count: int, edge: int, seed: int, augment: bool = False
) -> list[Volume]:
    """Draw `count` random cubic subvolumes of side `edge`.

    Origins are uniform over the valid range per axis; with `augment` a
    uniform symmetry op in [0, 47] is applied to each crop.  Fully
    deterministic for a given seed.
    """
    nx, ny, nz = volume.dims
    if edge > min(nx, ny, nz):
        raise ValueError(f"edge {edge} exceeds volume dims {(nx, ny, nz)}")
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(int(count)):
        origin = tuple(int(rng.integers(0, d - edge + 1)) for d in (nx, ny, nz))
        sub = crop(volume, origin, (edge, edge, edge))
        if augment:
            sub = apply_symmetry(sub, int(rng.integers(0, SYMMETRY_OP_COUNT)))
        out.append(sub)
    return out


# ---------------------------------------------------------------------------
# Intensity range mapping (for generative training data)
# ---------------------------------------------------------------------------

def to_unit_range(volume: GrayscaleVolume) -> np.ndarray:
    """Map intensities [0, 255] onto [-1, 1] via value/127.5 - 1."""
    return volume.data.astype(np.float64) / 127.5 - 1.0


def from_unit_range(values: np.ndarray, spacing: float = DEFAULT_SPACING_UM) -> GrayscaleVolume:
    """Invert `to_unit_range`: scale to [0, 255], round to nearest, clamp."""
    raw = np.rint((np.asarray(values, dtype=np.float64) + 1.0) * 127.5)
    return GrayscaleVolume(np.clip(raw, 0, 255).astype(np.uint8), spacing)
