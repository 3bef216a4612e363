"""Tests for the configuration schemas."""

from pathlib import Path

import pytest
from pydantic import ValidationError

from pure_explorer.core import FixedBudget, FixedConfidence
from pure_explorer.envs import PriorSpec
from pure_explorer.schemas import ExperimentConfig, ModeConfig, ModelConfig, TrainingConfig


@pytest.mark.parametrize(
    "fields",
    [
        pytest.param({"kind": "fixed_budget"}, id="budget-without-n"),
        pytest.param({"kind": "fixed_confidence", "delta": 0.1}, id="confidence-without-horizon"),
        pytest.param({"kind": "fixed_confidence", "delta": 0.7, "n_max": 5}, id="delta-too-large"),
        pytest.param({"kind": "fixed_budget", "n": 0}, id="empty-budget"),
        pytest.param({"kind": "anytime", "n": 3}, id="unknown-kind"),
    ],
)
def test_mode_config_rejects(fields) -> None:
    with pytest.raises(ValidationError):
        ModeConfig(**fields)


def test_mode_config_builds_modes() -> None:
    assert ModeConfig.budget(3).to_mode() == FixedBudget(3)
    assert ModeConfig.confidence(0.1, 8).to_mode() == FixedConfidence(0.1, 8)


def test_model_config_heads_must_divide_width() -> None:
    with pytest.raises(ValidationError, match="does not divide"):
        ModelConfig(d_model=10, n_heads=3)


def test_model_config_defaults() -> None:
    assert ModelConfig(d_model=16).ff_dim == 64
    assert ModelConfig(d_model=16, d_ff=20).ff_dim == 20
    large = ModelConfig.large(max_len=12)
    assert (large.d_model, large.n_layers, large.n_heads, large.dropout, large.max_len) == (256, 3, 2, 0.1, 12)


@pytest.mark.parametrize(
    "epoch, expected",
    [
        pytest.param(0, 1.0, id="start"),
        pytest.param(2, 0.62, id="halfway"),
        pytest.param(5, 0.05, id="end-of-decay"),
        pytest.param(9, 0.05, id="after-decay"),
    ],
)
def test_epsilon_schedule(epoch: int, expected: float) -> None:
    config = TrainingConfig(epochs=10, epsilon_start=1.0, epsilon_final=0.05, epsilon_decay_fraction=0.5)

    assert config.epsilon(epoch) == pytest.approx(expected)


def test_training_config_is_frozen() -> None:
    with pytest.raises(ValidationError):
        TrainingConfig().epochs = 3


def test_config_hash_ignores_output_location() -> None:
    """
    Test which fields enter the configuration hash.

    Given two configurations that differ only in output directory and worker count:
    When hashing them,
    Then the hashes agree, while a different master seed changes the hash.
    """
    base = ExperimentConfig(prior="two-model-det", algorithm="exact", mode=ModeConfig.budget(1))
    moved = base.model_copy(update={"output_dir": Path("elsewhere"), "workers": 4})
    reseeded = base.model_copy(update={"master_seed": 1})

    assert base.config_hash() == moved.config_hash()
    assert base.config_hash() != reseeded.config_hash()


def test_inline_prior(two_model_det: PriorSpec) -> None:
    config = ExperimentConfig(prior=two_model_det, algorithm="exact", mode=ModeConfig.budget(1))

    assert config.resolve_prior() == two_model_det
    assert ExperimentConfig(prior="gaussian-3", algorithm="tas", mode=ModeConfig.budget(1)).resolve_prior().k == 3
