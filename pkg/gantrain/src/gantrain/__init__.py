"""gantrain: desk-scale Wasserstein GAN over .mvol microstructure volumes."""

from .data import VolumeStore, data_sampler, from_unit_range, sample_batch, to_unit_range
from .generate import generate_batch
from .losses import wasserstein_losses
from .models import build_critic, build_generator
from .mvol import read_mvol, write_mvol
from .train import TrainConfig, TrainState, learning_rate_at, train

__version__ = "0.1.0"
