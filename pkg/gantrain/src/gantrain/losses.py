"""Wasserstein objective for the critic/generator pair."""

from __future__ import annotations

import torch


def wasserstein_losses(
    real_scores: torch.Tensor, fake_scores: torch.Tensor
) -> tuple[torch.Tensor, torch.Tensor]:
    """(critic loss, generator loss) from score batches.

    critic loss = mean(fake) - mean(real); generator loss = -mean(fake).
    Shifting every score by a constant leaves the critic loss unchanged.
    """
    if real_scores.numel() == 0 or fake_scores.numel() == 0:
        raise ValueError("score batches must be non-empty")
    critic = fake_scores.mean() - real_scores.mean()
    generator = -fake_scores.mean()
    return critic, generator
