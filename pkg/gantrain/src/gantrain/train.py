"""Adversarial training loop with the published hyperparameters.

Defaults follow the reference recipe: Adam with beta1=0.1, beta2=0.9 for
both networks (beta1=0.1 is unusual for this family but implemented as
printed), one critic update per generator update, learning rate stepping
5e-5 -> 1e-5 -> 5e-6 -> 1e-6 after 27 / 78 / 147 epochs, where one epoch
means the critic has seen 100,000 images.  Desk scale: a single device,
small minibatches.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import torch

from .data import VolumeStore, data_sampler
from .losses import wasserstein_losses
from .models import (
    build_critic,
    build_generator,
    normalized_modules,
    top_singular_value,
)

LR_SCHEDULE = ((0, 5e-5), (27, 1e-5), (78, 5e-6), (147, 1e-6))


@dataclass(frozen=True)
class TrainConfig:
    scale: int = 32
    width: float = 1.0
    batch: int = 8
    iterations: int = 200
    n_dis: int = 1
    adam_betas: tuple = (0.1, 0.9)
    lr_schedule: tuple = LR_SCHEDULE
    images_per_epoch: int = 100_000
    seed: int = 0
    checkpoint_every: int = 0  # iterations; 0 disables periodic checkpoints
    log_spectral_every: int = 50
    initial_lr: float | None = None  # override the schedule's first step

    def __post_init__(self):
        if self.n_dis < 1:
            raise ValueError("n_dis must be at least 1")
        epochs = [e for e, _ in self.lr_schedule]
        if epochs != sorted(epochs):
            raise ValueError("lr schedule breakpoints must be ordered")


@dataclass
class TrainState:
    iteration: int = 0
    images_seen: int = 0
    critic_losses: list = field(default_factory=list)
    generator_losses: list = field(default_factory=list)
    wasserstein_gap: list = field(default_factory=list)
    spectral_norms: list = field(default_factory=list)
    checkpoints: list = field(default_factory=list)

    @property
    def epoch(self) -> float:
        return self.images_seen / 100_000.0


def learning_rate_at(epoch: float, schedule=LR_SCHEDULE, initial: float | None = None) -> float:
    """Learning rate in effect at a (fractional) epoch count."""
    lr = schedule[0][1] if initial is None else initial
    for boundary, value in schedule:
        if boundary == 0:
            continue
        if epoch >= boundary:
            lr = value
    return lr


def save_checkpoint(path, generator, critic, opt_g, opt_c, state: TrainState) -> None:
    """Atomic checkpoint write (temp file then rename)."""
    payload = {
        "generator": generator.state_dict(),
        "critic": critic.state_dict(),
        "opt_g": opt_g.state_dict() if opt_g is not None else None,
        "opt_c": opt_c.state_dict() if opt_c is not None else None,
        "iteration": state.iteration,
        "images_seen": state.images_seen,
    }
    tmp = str(path) + ".tmp"
    torch.save(payload, tmp)
    os.replace(tmp, path)


def load_checkpoint(path, generator, critic, opt_g=None, opt_c=None) -> dict:
    payload = torch.load(path, map_location="cpu", weights_only=False)
    generator.load_state_dict(payload["generator"])
    critic.load_state_dict(payload["critic"])
    if opt_g is not None and payload["opt_g"] is not None:
        opt_g.load_state_dict(payload["opt_g"])
    if opt_c is not None and payload["opt_c"] is not None:
        opt_c.load_state_dict(payload["opt_c"])
    return payload


def train(
    cfg: TrainConfig, store: VolumeStore, checkpoint_dir=None
) -> tuple[torch.nn.Module, torch.nn.Module, TrainState]:
    """Alternate critic and generator updates for cfg.iterations rounds.

    Logs the per-iteration Wasserstein gap |mean(real) - mean(fake)| and
    periodic spectral-norm estimates; aborts with a diagnostic checkpoint
    if a loss goes non-finite.
    """
    torch.manual_seed(cfg.seed)
    generator = build_generator(cfg.scale, cfg.width)
    critic = build_critic(cfg.scale, cfg.width)
    lr0 = learning_rate_at(0.0, cfg.lr_schedule, cfg.initial_lr)
    opt_g = torch.optim.Adam(generator.parameters(), lr=lr0, betas=cfg.adam_betas)
    opt_c = torch.optim.Adam(critic.parameters(), lr=lr0, betas=cfg.adam_betas)
    batches = data_sampler(store, cfg.scale, cfg.batch, seed=cfg.seed)
    state = TrainState()

    def set_lr(lr: float):
        for opt in (opt_g, opt_c):
            for group in opt.param_groups:
                group["lr"] = lr

    for it in range(cfg.iterations):
        set_lr(learning_rate_at(state.epoch, cfg.lr_schedule, cfg.initial_lr))

        for _ in range(cfg.n_dis):
            real = next(batches)
            with torch.no_grad():
                z = torch.randn(cfg.batch, generator.latent_dim)
                fake = generator(z)
            real_scores = critic(real)
            fake_scores = critic(fake)
            critic_loss, _ = wasserstein_losses(real_scores, fake_scores)
            opt_c.zero_grad(set_to_none=True)
            critic_loss.backward()
            opt_c.step()
            state.images_seen += cfg.batch

        z = torch.randn(cfg.batch, generator.latent_dim)
        fake_scores = critic(generator(z))
        generator_loss = -fake_scores.mean()
        opt_g.zero_grad(set_to_none=True)
        generator_loss.backward()
        opt_g.step()

        state.iteration = it + 1
        state.critic_losses.append(float(critic_loss.detach()))
        state.generator_losses.append(float(generator_loss.detach()))
        # |mean(real) - mean(fake)| as scored by the pre-update critic
        state.wasserstein_gap.append(abs(state.critic_losses[-1]))

        if not (math.isfinite(state.critic_losses[-1]) and math.isfinite(state.generator_losses[-1])):
            if checkpoint_dir is not None:
                path = os.path.join(checkpoint_dir, "diagnostic.pt")
                save_checkpoint(path, generator, critic, opt_g, opt_c, state)
                state.checkpoints.append(path)
            raise RuntimeError(
                f"non-finite loss at iteration {state.iteration}; diagnostic checkpoint saved"
            )

        if cfg.log_spectral_every and state.iteration % cfg.log_spectral_every == 0:
            state.spectral_norms.append(
                [top_singular_value(m) for m in normalized_modules(critic)]
            )
        if (
            checkpoint_dir is not None
            and cfg.checkpoint_every
            and state.iteration % cfg.checkpoint_every == 0
        ):
            path = os.path.join(checkpoint_dir, f"iter{state.iteration:06d}.pt")
            save_checkpoint(path, generator, critic, opt_g, opt_c, state)
            state.checkpoints.append(path)

    return generator, critic, state
