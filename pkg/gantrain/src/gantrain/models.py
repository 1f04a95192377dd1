"""Generator and spectrally normalized critic for 3D grayscale volumes.

The generator maps a 100-dimensional normal latent to a cubic volume in
(-1, 1) through a dense projection and four upsample+convolution stages
(nearest-neighbor upsampling avoids checkerboard artifacts); the critic
mirrors it with paired stride-1/stride-2 convolutions, every convolution
and the final dense layer spectrally normalized, leaky-ReLU slope 0.1.

`scale` is the output edge (96 or 32); the spatial chain shrinks
proportionally (base edge = scale // 16).  `width` scales the channel
counts for cheap smoke runs; width=1 reproduces the full architecture,
whose per-stage output shapes at scale 96 are

    generator: (512,6,6,6) -> (256,12^3) -> (128,24^3) -> (64,48^3)
               -> (32,96^3) -> (1,96^3)
    critic:    (32,48^3) -> (64,24^3) -> (128,12^3) -> (256,6^3)
               -> (512,6^3) -> scalar

Batch normalization runs after the activation (not before), momentum 0.8
in exponential-moving-average terms (torch momentum 0.2).
"""

from __future__ import annotations

import torch
from torch import nn
from torch.nn.utils.parametrizations import spectral_norm

LATENT_DIM = 100
SUPPORTED_SCALES = (32, 96)
GENERATOR_CHANNELS = (512, 256, 128, 64, 32)
CRITIC_CHANNELS = (32, 64, 128, 256, 512)
LEAKY_SLOPE = 0.1
BN_MOMENTUM_EMA = 0.8  # keras-style; torch takes the complement


def _scaled(channels, width: float) -> list[int]:
    return [max(1, int(round(c * width))) for c in channels]


def _check_scale(scale: int) -> int:
    if scale not in SUPPORTED_SCALES:
        raise ValueError(f"unsupported scale {scale}; choose from {SUPPORTED_SCALES}")
    return scale // 16


class Generator(nn.Module):
    """Dense reshape followed by four upsample+conv stages and a tanh head."""

    def __init__(self, scale: int = 96, width: float = 1.0, latent_dim: int = LATENT_DIM):
        super().__init__()
        base = _check_scale(scale)
        ch = _scaled(GENERATOR_CHANNELS, width)
        self.scale = scale
        self.latent_dim = latent_dim
        self.base = base
        self.channels = ch
        self.project = nn.Linear(latent_dim, ch[0] * base ** 3)
        stages = []
        for cin, cout in zip(ch[:-1], ch[1:]):
            stages.append(
                nn.Sequential(
                    nn.Upsample(scale_factor=2, mode="nearest"),
                    nn.Conv3d(cin, cout, kernel_size=4, stride=1, padding="same"),
                    nn.ReLU(),
                    nn.BatchNorm3d(cout, momentum=1.0 - BN_MOMENTUM_EMA),
                )
            )
        self.stages = nn.ModuleList(stages)
        self.head = nn.Sequential(
            nn.Conv3d(ch[-1], 1, kernel_size=3, stride=1, padding="same"),
            nn.Tanh(),
        )

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        x = self.project(z)
        x = x.view(z.shape[0], self.channels[0], self.base, self.base, self.base)
        for stage in self.stages:
            x = stage(x)
        return self.head(x)


class Critic(nn.Module):
    """Paired stride-1 / stride-2 spectrally normalized convolutions.

    Channels rise at the stride-1 convolution of each pair; a final
    stride-1 convolution widens to the top channel count before the
    spectrally normalized linear head.
    """

    def __init__(self, scale: int = 96, width: float = 1.0):
        super().__init__()
        base = _check_scale(scale)
        ch = _scaled(CRITIC_CHANNELS, width)
        self.scale = scale
        self.channels = ch
        act = nn.LeakyReLU(LEAKY_SLOPE)
        pairs = []
        cin = 1
        for cout in ch[:-1]:
            pairs.append(
                nn.Sequential(
                    spectral_norm(nn.Conv3d(cin, cout, kernel_size=3, stride=1, padding=1)),
                    act,
                    spectral_norm(nn.Conv3d(cout, cout, kernel_size=4, stride=2, padding=1)),
                    act,
                )
            )
            cin = cout
        self.stages = nn.ModuleList(pairs)
        self.widen = nn.Sequential(
            spectral_norm(nn.Conv3d(ch[-2], ch[-1], kernel_size=3, stride=1, padding=1)),
            act,
        )
        self.head = spectral_norm(nn.Linear(ch[-1] * base ** 3, 1))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        for stage in self.stages:
            x = stage(x)
        x = self.widen(x)
        return self.head(x.flatten(1)).squeeze(1)


def build_generator(scale: int = 96, width: float = 1.0) -> Generator:
    return Generator(scale=scale, width=width)


def build_critic(scale: int = 96, width: float = 1.0) -> Critic:
    return Critic(scale=scale, width=width)


def normalized_modules(critic: Critic):
    """The critic's spectrally normalized modules, in forward order."""
    out = []
    for stage in critic.stages:
        out += [stage[0], stage[2]]
    out.append(critic.widen[0])
    out.append(critic.head)
    return out


def effective_weight_matrix(module: nn.Module) -> torch.Tensor:
    """Normalized weight reshaped to 2D, as the power iteration sees it."""
    w = module.weight
    return w.reshape(w.shape[0], -1)


def top_singular_value(module: nn.Module) -> float:
    """Largest singular value of the effective (normalized) weight via SVD.

    Power iterations advance one step per forward pass in train mode;
    drive the parent network forward to converge the estimate first.
    """
    with torch.no_grad():
        return float(torch.linalg.svdvals(effective_weight_matrix(module))[0])


def generator_parameter_count(scale: int, width: float = 1.0) -> int:
    """Closed-form trainable parameter count, for cross-checking the model."""
    base = _check_scale(scale)
    ch = _scaled(GENERATOR_CHANNELS, width)
    total = LATENT_DIM * ch[0] * base ** 3 + ch[0] * base ** 3  # dense + bias
    for cin, cout in zip(ch[:-1], ch[1:]):
        total += 4 ** 3 * cin * cout + cout  # conv + bias
        total += 2 * cout  # batch-norm affine
    total += 3 ** 3 * ch[-1] * 1 + 1  # head conv + bias
    return total


def critic_parameter_count(scale: int, width: float = 1.0) -> int:
    base = _check_scale(scale)
    ch = _scaled(CRITIC_CHANNELS, width)
    total = 0
    cin = 1
    for cout in ch[:-1]:
        total += 3 ** 3 * cin * cout + cout
        total += 4 ** 3 * cout * cout + cout
        cin = cout
    total += 3 ** 3 * ch[-2] * ch[-1] + ch[-1]
    total += ch[-1] * base ** 3 + 1  # dense head + bias
    return total
