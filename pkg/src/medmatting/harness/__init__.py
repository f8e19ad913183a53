"""Synthetic data, augmentation, training, evaluation, and configuration."""

from medmatting.harness.config import TrainConfig, read_config, write_config
from medmatting.harness.schedule import lr_schedule
from medmatting.harness.synth import SyntheticScene, compose, synth_dataset

__all__ = [
    "TrainConfig",
    "read_config",
    "write_config",
    "lr_schedule",
    "SyntheticScene",
    "compose",
    "synth_dataset",
]
