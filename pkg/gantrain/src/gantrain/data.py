"""Training data: random crops of stored volumes with cube-symmetry
augmentation, mapped onto [-1, 1].

The 48 cube symmetries are realized as an axis permutation plus axis
flips derived from the op's signed permutation matrix; op 0 is the
identity, ops 24-47 add a mirror.
"""

from __future__ import annotations

import itertools
from glob import glob
from pathlib import Path

import numpy as np
import torch

from .mvol import KIND_GRAYSCALE, read_mvol


def _symmetry_ops() -> np.ndarray:
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


_SYMMETRY_MATRICES = _symmetry_ops()


def apply_symmetry(block: np.ndarray, op: int) -> np.ndarray:
    m = _SYMMETRY_MATRICES[op]
    axes = [int(np.nonzero(m[row])[0][0]) for row in range(3)]
    out = np.transpose(block, axes=axes)
    for axis in range(3):
        if m[axis, axes[axis]] < 0:
            out = np.flip(out, axis=axis)
    return out.copy()


def to_unit_range(block: np.ndarray) -> np.ndarray:
    return block.astype(np.float32) / 127.5 - 1.0


def from_unit_range(values: np.ndarray) -> np.ndarray:
    raw = np.rint((np.asarray(values, dtype=np.float64) + 1.0) * 127.5)
    return np.clip(raw, 0, 255).astype(np.uint8)


class VolumeStore:
    """Grayscale volumes loaded from .mvol files, kept in memory."""

    def __init__(self, patterns):
        if isinstance(patterns, (str, Path)):
            patterns = [patterns]
        paths = []
        for pattern in patterns:
            paths.extend(sorted(glob(str(pattern))))
        self.volumes = []
        self.spacing = None
        for path in paths:
            data, spacing, kind = read_mvol(path)
            if kind != KIND_GRAYSCALE:
                continue
            self.volumes.append(data)
            self.spacing = spacing if self.spacing is None else self.spacing
        if not self.volumes:
            raise ValueError(f"no grayscale volumes matched {patterns}")

    def __len__(self) -> int:
        return len(self.volumes)


def sample_batch(
    store: VolumeStore, edge: int, batch: int, rng: np.random.Generator,
    augment: bool = True,
) -> torch.Tensor:
    """One (batch, 1, edge, edge, edge) minibatch in [-1, 1].

    Volumes, crop origins and symmetry ops are drawn uniformly;
    deterministic for a given generator state.
    """
    out = np.empty((batch, 1, edge, edge, edge), dtype=np.float32)
    for i in range(batch):
        vol = store.volumes[int(rng.integers(0, len(store.volumes)))]
        if min(vol.shape) < edge:
            raise ValueError(f"stored volume {vol.shape} smaller than edge {edge}")
        origin = [int(rng.integers(0, d - edge + 1)) for d in vol.shape]
        block = vol[
            origin[0] : origin[0] + edge,
            origin[1] : origin[1] + edge,
            origin[2] : origin[2] + edge,
        ]
        if augment:
            block = apply_symmetry(block, int(rng.integers(0, 48)))
        out[i, 0] = to_unit_range(block)
    return torch.from_numpy(out)


def data_sampler(
    store: VolumeStore, edge: int, batch: int, seed: int, augment: bool = True
):
    """Infinite deterministic iterator of training minibatches."""
    rng = np.random.default_rng(seed)
    while True:
        yield sample_batch(store, edge, batch, rng, augment=augment)
