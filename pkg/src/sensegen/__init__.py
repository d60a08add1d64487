"""Mixture-density LSTM generator and LSTM discriminator for synthetic sensor traces, on a small numpy autodiff core."""

from .discriminator import DiscriminatorConfig, DiscriminatorModel
from .generator import GeneratorConfig, GeneratorModel, forward, generate, sequence_nll
from .training import TrainConfig, alternating_loop, train_discriminator, train_generator

__version__ = "0.1.0"

__all__ = [
    "DiscriminatorConfig",
    "DiscriminatorModel",
    "GeneratorConfig",
    "GeneratorModel",
    "TrainConfig",
    "alternating_loop",
    "forward",
    "generate",
    "sequence_nll",
    "train_discriminator",
    "train_generator",
]
