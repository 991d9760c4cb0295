"""Semi-supervised DCGAN for device-free CSI fingerprint localization, in numpy."""
from .dataset import DatasetSplit, load_csv, normalize, save_csv, select_labeled_subset, synth_generate
from .models import (
    build_discriminator,
    build_generator,
    build_simplified_generator,
    classify,
    discriminate,
    generate,
    load_checkpoint,
    logits,
    save_checkpoint,
)
from .tensor_engine import ConfigurationError, UsageError
from .trainer import AdamConfig, TrainConfig, TrainHistory, train

__version__ = "0.1.0"

__all__ = [
    "AdamConfig",
    "ConfigurationError",
    "DatasetSplit",
    "TrainConfig",
    "TrainHistory",
    "UsageError",
    "build_discriminator",
    "build_generator",
    "build_simplified_generator",
    "classify",
    "discriminate",
    "generate",
    "load_checkpoint",
    "load_csv",
    "logits",
    "normalize",
    "save_checkpoint",
    "save_csv",
    "select_labeled_subset",
    "synth_generate",
    "train",
]
