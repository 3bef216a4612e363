"""This module contains the configuration schemas for the pure_explorer package."""

from pure_explorer.envs import PriorSpec
from pure_explorer.schemas.experiment_schema import ExperimentConfig, ModeConfig
from pure_explorer.schemas.training_schema import ModelConfig, TrainingConfig

__all__ = ["PriorSpec", "ModeConfig", "ModelConfig", "TrainingConfig", "ExperimentConfig"]
