"""This module contains the configuration models for the sequence networks and the meta-training loop."""

from __future__ import annotations

from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from pure_explorer.config import COST_FLOOR, EPSILON_FINAL, EPSILON_START, EVAL_ROLLOUTS


class ModelConfig(BaseModel):
    """
    Architecture of a causal sequence model.

    Attributes
    ----------
    d_model : int
        Width of the token embedding and of every attention block.
    n_layers : int
        Number of attention blocks.
    n_heads : int
        Attention heads per block; must divide ``d_model``.
    d_ff : int, optional
        Hidden width of the feedforward sublayer (default is ``4 * d_model``).
    dropout : float
        Dropout rate on the residual branches, applied during training only.
    max_len : int
        Longest history (in observations) the positional table covers.
    """

    d_model: int = Field(default=64, ge=1)
    n_layers: int = Field(default=2, ge=1)
    n_heads: int = Field(default=2, ge=1)
    d_ff: Optional[int] = Field(default=None, ge=1)
    dropout: float = Field(default=0.0, ge=0.0, lt=1.0)
    max_len: int = Field(default=32, ge=2)

    model_config = ConfigDict(frozen=True)

    @model_validator(mode="after")
    def _check_heads(self) -> ModelConfig:
        if self.d_model % self.n_heads:
            raise ValueError(f"n_heads={self.n_heads} does not divide d_model={self.d_model}")
        return self

    @property
    def ff_dim(self) -> int:
        return self.d_ff if self.d_ff is not None else 4 * self.d_model

    @classmethod
    def large(cls, max_len: int = 32) -> ModelConfig:
        """Three blocks of width 256 with two heads and dropout 0.1."""
        return cls(d_model=256, n_layers=3, n_heads=2, dropout=0.1, max_len=max_len)


class TrainingConfig(BaseModel):  # pylint: disable=too-many-instance-attributes
    """
    Hyperparameters of the meta-training loop.

    ``target_period_infer`` and ``target_period_q`` count gradient steps between target refreshes. Exploration is
    epsilon-greedy, annealed linearly from ``epsilon_start`` to ``epsilon_final`` over the first
    ``epsilon_decay_fraction`` of the epochs; ``epsilon_final = 0`` gives the purely greedy loop.
    """

    epochs: int = Field(default=200, ge=1)
    episodes_per_epoch: int = Field(default=16, ge=1)
    gradient_steps: int = Field(default=8, ge=1)
    batch_size: int = Field(default=64, ge=1)
    buffer_capacity: int = Field(default=20_000, ge=1)
    lr: float = Field(default=1e-3, gt=0.0)
    beta1: float = Field(default=0.9, ge=0.0, lt=1.0)
    beta2: float = Field(default=0.999, ge=0.0, lt=1.0)
    adam_eps: float = Field(default=1e-8, gt=0.0)
    clip_norm: Optional[float] = Field(default=1.0, gt=0.0)
    target_period_infer: int = Field(default=50, ge=1)
    target_period_q: int = Field(default=50, ge=1)
    epsilon_start: float = Field(default=EPSILON_START, ge=0.0, le=1.0)
    epsilon_final: float = Field(default=EPSILON_FINAL, ge=0.0, le=1.0)
    epsilon_decay_fraction: float = Field(default=0.5, gt=0.0, le=1.0)
    gamma: float = Field(default=1.0, gt=0.0, le=1.0)
    log_reward: bool = False
    initial_cost: float = Field(default=0.05, ge=COST_FLOOR)
    cost_step: float = Field(default=0.01, gt=0.0)
    eval_rollouts: int = Field(default=EVAL_ROLLOUTS, ge=1)
    certify: bool = False
    delta_prime: float = Field(default=0.1, gt=0.0, lt=1.0)
    eta: float = Field(default=0.05, gt=0.0, lt=1.0)
    model: ModelConfig = Field(default_factory=ModelConfig)

    model_config = ConfigDict(frozen=True)

    def epsilon(self, epoch: int) -> float:
        """Exploration rate used during ``epoch`` (0-based)."""
        decay_epochs = max(1, int(round(self.epsilon_decay_fraction * self.epochs)))
        frac = min(1.0, epoch / decay_epochs)
        return self.epsilon_start + frac * (self.epsilon_final - self.epsilon_start)
