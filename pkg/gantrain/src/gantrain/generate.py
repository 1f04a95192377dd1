"""Export generated volumes as grayscale .mvol files."""

from __future__ import annotations

from pathlib import Path

import torch

from .data import from_unit_range
from .mvol import KIND_GRAYSCALE, write_mvol


def generate_batch(
    generator: torch.nn.Module,
    count: int,
    seed: int,
    out_dir,
    spacing: float = 0.065,
) -> list[Path]:
    """Sample `count` latents, render volumes, write one .mvol each."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    torch.manual_seed(seed)
    generator.eval()
    paths = []
    with torch.no_grad():
        for i in range(count):
            z = torch.randn(1, generator.latent_dim)
            volume = generator(z)[0, 0].numpy()
            data = from_unit_range(volume)
            path = out / f"generated_{i:04d}.mvol"
            write_mvol(path, data, spacing, KIND_GRAYSCALE)
            paths.append(path)
    return paths
