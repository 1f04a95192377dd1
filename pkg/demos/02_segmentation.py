"""Watershed segmentation of a noisy three-phase volume.

Renders a synthetic microstructure to grayscale with noise, inspects the
intensity/gradient density map, seeds the three phases with bounds placed
at the modes, and floods the gradient field.
"""

import numpy as np

from triphase.segmentation import (
    SeedBounds,
    density_map,
    segment_pipeline,
    select_seeds,
    sobel_gradient,
)
from triphase.synthgen import SynthConfig, generate, grayscale_render

# coarser grains keep the interface fraction low; accuracy tracks it
truth = generate(SynthConfig(dims=(48, 48, 48), seed=3,
                             size_moments={2: (0.9, 0.2), 3: (0.85, 0.2)},
                             aspect_range=(0.9, 1.1), overlap_threshold=0.2))
gray = grayscale_render(truth, intensities={1: 20, 2: 128, 3: 230},
                        noise_std=10.0, seed=3)
print(f"rendered {gray.dims} grayscale volume with sigma=10 noise")

grad = sobel_gradient(gray)
dm = density_map(gray, grad)
marginal = dm.counts.sum(axis=1)
peaks = sorted(np.argsort(marginal)[-8:])
print(f"density-map intensity bins with most mass near: {peaks}")

# bounds sit at the three intensity modes; the gradient cap excludes
# interface voxels while keeping phase interiors
bounds = SeedBounds({
    1: ((0, 70), (0.0, 25.0)),
    2: ((90, 180), (0.0, 25.0)),
    3: ((200, 255), (0.0, 25.0)),
})
seeds = select_seeds(gray, grad, bounds)
for p in (1, 2, 3):
    print(f"phase {p}: {(seeds == p).sum()} seed voxels")

labels = segment_pipeline(gray, bounds)
accuracy = float(np.mean(labels.data == truth.data))
print(f"voxel accuracy vs ground truth: {accuracy:.4f}")
