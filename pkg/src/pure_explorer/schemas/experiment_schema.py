"""This module contains the configuration models for episode modes and whole experiments."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Any, Dict, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, model_validator

from pure_explorer.config import OUTPUT_DIR
from pure_explorer.core import EpisodeMode, FixedBudget, FixedConfidence
from pure_explorer.envs import PriorSpec, make_prior
from pure_explorer.schemas.training_schema import TrainingConfig


class ModeConfig(BaseModel):
    """
    Serializable form of an episode mode.

    Attributes
    ----------
    kind : {"fixed_budget", "fixed_confidence"}
        Termination regime.
    n : int, optional
        Query budget, required for a fixed budget.
    delta : float, optional
        Target error probability, required for fixed confidence.
    n_max : int, optional
        Forced-stop horizon, required for fixed confidence.
    """

    kind: Literal["fixed_budget", "fixed_confidence"]
    n: Optional[int] = Field(default=None, ge=1)
    delta: Optional[float] = Field(default=None, gt=0.0, le=0.5)
    n_max: Optional[int] = Field(default=None, ge=1)

    model_config = ConfigDict(frozen=True)

    @model_validator(mode="after")
    def _check_fields(self) -> ModeConfig:
        if self.kind == "fixed_budget" and self.n is None:
            raise ValueError("A fixed-budget mode needs n")
        if self.kind == "fixed_confidence" and (self.delta is None or self.n_max is None):
            raise ValueError("A fixed-confidence mode needs delta and n_max")
        return self

    @classmethod
    def budget(cls, n: int) -> ModeConfig:
        return cls(kind="fixed_budget", n=n)

    @classmethod
    def confidence(cls, delta: float, n_max: int) -> ModeConfig:
        return cls(kind="fixed_confidence", delta=delta, n_max=n_max)

    def to_mode(self) -> EpisodeMode:
        if self.kind == "fixed_budget":
            return FixedBudget(self.n)
        return FixedConfidence(self.delta, self.n_max)


class ExperimentConfig(BaseModel):
    """
    Everything needed to reproduce one evaluation run.

    ``prior`` is either a preset name understood by :func:`pure_explorer.envs.make_prior` or an inline prior.
    ``algorithm`` must name an entry of the harness registry; ``params`` are passed to its factory.
    """

    prior: Union[str, PriorSpec]
    algorithm: str
    mode: ModeConfig
    params: Dict[str, Any] = Field(default_factory=dict)
    seeds: int = Field(default=1, ge=1)
    envs_per_seed: int = Field(default=10, ge=1)
    trajectories_per_env: int = Field(default=1, ge=1)
    master_seed: int = Field(default=0, ge=0)
    output_dir: Path = OUTPUT_DIR
    checkpoint: Optional[Path] = None
    training: Optional[TrainingConfig] = None
    workers: int = Field(default=1, ge=1)

    model_config = ConfigDict(frozen=True)

    def resolve_prior(self) -> PriorSpec:
        return make_prior(self.prior) if isinstance(self.prior, str) else self.prior

    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON dump; output location and worker count do not enter the hash."""
        payload = json.dumps(self.model_dump(mode="json", exclude={"output_dir", "workers"}), sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()
