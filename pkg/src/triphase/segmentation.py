"""Grayscale-to-three-phase segmentation.

Four stages: 3D Sobel gradient magnitude, a 2D intensity/gradient density
map used to place seed bounds, bounded seed selection, and a
marker-controlled watershed that floods the gradient field from the seeds.

Gradient magnitudes are kept unnormalized internally (integer Sobel kernel,
one-axis unit ramp responds with 32); bounds and density maps use "user
units" obtained by dividing by `GRADIENT_UNIT`, so a configured bound of
1.0 corresponds to a unit intensity step per voxel.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .volume import PHASES, GrayscaleVolume, SegmentedVolume, _freeze

# Response of the one-axis Sobel kernel to a unit-slope ramp; divides raw
# magnitudes into user units so bounds stay comparable across tools.
GRADIENT_UNIT = 32.0

DEFAULT_INTENSITY_BINS = 256
DEFAULT_GRADIENT_BINS = 64


class SeedingError(ValueError):
    """Raised when a phase receives no seed voxels under the given bounds."""


@dataclass(frozen=True, eq=False)
class GradientVolume:
    """Per-voxel gradient magnitude (unnormalized Sobel units)."""

    values: np.ndarray
    spacing: float

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 3:
            raise ValueError(f"expected a 3D array, got shape {v.shape}")
        if np.any(v < 0):
            raise ValueError("gradient magnitudes must be non-negative")
        object.__setattr__(self, "values", _freeze(v))

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.values.shape

    def user_units(self) -> np.ndarray:
        return self.values / GRADIENT_UNIT


@dataclass(frozen=True)
class DensityMap:
    """2D histogram of (intensity, gradient in user units) over all voxels."""

    intensity_edges: np.ndarray
    gradient_edges: np.ndarray
    counts: np.ndarray

    def to_csv(self) -> str:
        """Nonzero bins as 'intensity_bin,gradient_bin,count' rows."""
        lines = ["intensity_bin,gradient_bin,count"]
        ii, gg = np.nonzero(self.counts)
        for i, g in zip(ii.tolist(), gg.tolist()):
            lines.append(f"{i},{g},{int(self.counts[i, g])}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class SeedBounds:
    """Per-phase seed boxes over (intensity, gradient in user units).

    Intensity intervals are closed [lo, hi]; gradient intervals are
    half-open [lo, hi), matching bounds phrased as "gradient lower than x".
    The three boxes must be pairwise disjoint.
    """

    boxes: dict

    def __post_init__(self):
        if sorted(self.boxes) != sorted(PHASES):
            raise ValueError(f"bounds must cover phases {PHASES}, got {sorted(self.boxes)}")
        for p, ((ilo, ihi), (glo, ghi)) in self.boxes.items():
            if ilo > ihi or glo >= ghi:
                raise ValueError(f"phase {p} has an empty box")
        phases = sorted(self.boxes)
        for i, a in enumerate(phases):
            for b in phases[i + 1 :]:
                (ailo, aihi), (aglo, aghi) = self.boxes[a]
                (bilo, bihi), (bglo, bghi) = self.boxes[b]
                intensity_overlap = max(ailo, bilo) <= min(aihi, bihi)
                gradient_overlap = max(aglo, bglo) < min(aghi, bghi)
                if intensity_overlap and gradient_overlap:
                    raise ValueError(f"seed boxes for phases {a} and {b} overlap")


def sobel_gradient(gray: GrayscaleVolume) -> GradientVolume:
    """Euclidean norm of the three 3D Sobel responses.

    Kernels are the separable 3x3x3 Sobel stencils (derivative weights
    {-1, 0, +1}, smoothing weights {1, 2, 1} on the transverse axes) with
    edge-replication padding at the faces.
    """
    if min(gray.dims) < 3:
        raise ValueError(f"volume thinner than 3 voxels on some axis: dims {gray.dims}")
    f = gray.data.astype(np.float64)
    total = np.zeros_like(f)
    for axis in range(3):
        g = ndimage.sobel(f, axis=axis, mode="nearest")
        total += g * g
    return GradientVolume(np.sqrt(total), gray.spacing)


def density_map(
    gray: GrayscaleVolume,
    grad: GradientVolume,
    intensity_bins: int = DEFAULT_INTENSITY_BINS,
    gradient_bins: int = DEFAULT_GRADIENT_BINS,
) -> DensityMap:
    """Joint histogram of voxel intensity vs gradient magnitude (user units)."""
    if gray.dims != grad.dims:
        raise ValueError(f"dims mismatch: {gray.dims} vs {grad.dims}")
    if intensity_bins < 1 or gradient_bins < 1:
        raise ValueError("bin counts must be at least 1")
    intensity = gray.data.ravel().astype(np.float64)
    gradient = grad.user_units().ravel()
    i_edges = np.linspace(0.0, 256.0, intensity_bins + 1)
    g_top = float(gradient.max())
    g_edges = np.linspace(0.0, g_top if g_top > 0 else 1.0, gradient_bins + 1)
    counts, _, _ = np.histogram2d(intensity, gradient, bins=[i_edges, g_edges])
    return DensityMap(i_edges, g_edges, counts.astype(np.int64))


def select_seeds(
    gray: GrayscaleVolume, grad: GradientVolume, bounds: SeedBounds
) -> np.ndarray:
    """Marker volume: voxel gets phase p where intensity and gradient fall
    inside phase p's box, 0 elsewhere.  Raises SeedingError naming any phase
    that receives no seeds."""
    if gray.dims != grad.dims:
        raise ValueError(f"dims mismatch: {gray.dims} vs {grad.dims}")
    intensity = gray.data
    gradient = grad.user_units()
    seeds = np.zeros(gray.dims, dtype=np.uint8)
    for p in PHASES:
        (ilo, ihi), (glo, ghi) = bounds.boxes[p]
        inside = (
            (intensity >= ilo)
            & (intensity <= ihi)
            & (gradient >= glo)
            & (gradient < ghi)
        )
        if not inside.any():
            raise SeedingError(f"phase {p} received zero seed voxels")
        seeds[inside] = p
    return seeds


def watershed(grad: GradientVolume, seeds: np.ndarray) -> SegmentedVolume:
    """Priority-flood the gradient field from seed markers.

    The flood expands over 6-connected neighbors in order of increasing
    (gradient magnitude, queue insertion index); seeds enter the queue in
    raster order at their own gradient value, and every voxel is labeled by
    the first front that reaches it.  Seeded voxels keep their markers.
    The output depends only on the rank order of the gradient values, so
    any strictly monotone transform of the field leaves it unchanged.
    """
    seeds = np.asarray(seeds)
    if seeds.shape != grad.dims:
        raise ValueError(f"dims mismatch: seeds {seeds.shape} vs gradient {grad.dims}")
    present = set(np.unique(seeds).tolist()) - {0}
    missing = [p for p in PHASES if p not in present]
    if missing:
        raise SeedingError(f"phase {missing[0]} received zero seed voxels")

    nx, ny, nz = grad.dims
    g = np.ascontiguousarray(grad.values).ravel()
    labels = np.ascontiguousarray(seeds, dtype=np.uint8).ravel().copy()
    sy, sx = nz, ny * nz  # C-order strides for (nx, ny, nz)

    heap = []
    counter = 0
    for idx in np.flatnonzero(labels).tolist():
        heap.append((g[idx], counter, idx))
        counter += 1
    heapq.heapify(heap)  # insertion already sorted by counter within equal g

    push = heapq.heappush
    pop = heapq.heappop
    while heap:
        _, _, idx = pop(heap)
        lab = labels[idx]
        z = idx % nz
        y = (idx // nz) % ny
        x = idx // sx
        if x > 0 and labels[idx - sx] == 0:
            labels[idx - sx] = lab
            push(heap, (g[idx - sx], counter, idx - sx))
            counter += 1
        if x < nx - 1 and labels[idx + sx] == 0:
            labels[idx + sx] = lab
            push(heap, (g[idx + sx], counter, idx + sx))
            counter += 1
        if y > 0 and labels[idx - sy] == 0:
            labels[idx - sy] = lab
            push(heap, (g[idx - sy], counter, idx - sy))
            counter += 1
        if y < ny - 1 and labels[idx + sy] == 0:
            labels[idx + sy] = lab
            push(heap, (g[idx + sy], counter, idx + sy))
            counter += 1
        if z > 0 and labels[idx - 1] == 0:
            labels[idx - 1] = lab
            push(heap, (g[idx - 1], counter, idx - 1))
            counter += 1
        if z < nz - 1 and labels[idx + 1] == 0:
            labels[idx + 1] = lab
            push(heap, (g[idx + 1], counter, idx + 1))
            counter += 1

    return SegmentedVolume(labels.reshape((nx, ny, nz)), grad.spacing)


def segment_pipeline(gray: GrayscaleVolume, bounds: SeedBounds) -> SegmentedVolume:
    """Sobel gradient -> bounded seed selection -> watershed flood."""
    grad = sobel_gradient(gray)
    seeds = select_seeds(gray, grad, bounds)
    return watershed(grad, seeds)
