"""
Fixtures for tests.

This file provides small finite priors, tiny network and training configurations, and a helper that writes
experiment TOML files for the harness and CLI tests.
"""

from pathlib import Path
from typing import Callable, Dict

import pytest

from pure_explorer.core import RandomSource
from pure_explorer.envs import EnvFamily, EnvModel, PriorSpec, make_prior
from pure_explorer.schemas import ModelConfig, TrainingConfig

WriteConfigFunc = Callable[[str, Dict[str, Dict[str, object]]], Path]


@pytest.fixture
def rng() -> RandomSource:
    """Provide a fresh random source with seed 0."""
    return RandomSource(0)


@pytest.fixture
def two_model_det() -> PriorSpec:
    """Two deterministic models, each with a different best arm; one pull of arm 0 identifies the answer."""
    return make_prior("two-model-det")


@pytest.fixture
def three_model_gauss() -> PriorSpec:
    return make_prior("three-model-gauss")


@pytest.fixture
def one_hot_models() -> PriorSpec:
    """
    Three deterministic models over three arms where model ``m`` pays 1 on arm ``m`` only.

    Observations are the atoms {0, 1}, so exact solvers and fitted Q iteration agree on the quantization.
    """
    spec = PriorSpec(family=EnvFamily.DETERMINISTIC, k=3)
    models = [EnvModel.bandit([1.0 if a == m else 0.0 for a in range(3)]) for m in range(3)]
    return spec.with_support(models)


@pytest.fixture
def tiny_model() -> ModelConfig:
    """A one-block network of width 8, small enough for finite-difference checks."""
    return ModelConfig(d_model=8, n_layers=1, n_heads=2, d_ff=16, max_len=8)


@pytest.fixture
def tiny_training(tiny_model: ModelConfig) -> TrainingConfig:
    """A few epochs of a very small meta-training run."""
    return TrainingConfig(
        epochs=3,
        episodes_per_epoch=4,
        gradient_steps=2,
        batch_size=8,
        buffer_capacity=256,
        target_period_infer=2,
        target_period_q=2,
        eval_rollouts=4,
        model=tiny_model,
    )


@pytest.fixture
def write_config(tmp_path: Path) -> WriteConfigFunc:
    """
    Provide a helper that writes a TOML experiment file.

    Returns
    -------
    WriteConfigFunc
        ``write(name, tables)`` where ``tables`` maps section names to flat key/value dicts.
    """

    def _write(name: str, tables: Dict[str, Dict[str, object]]) -> Path:
        lines = []
        for section, values in tables.items():
            lines.append(f"[{section}]")
            for key, value in values.items():
                lines.append(f"{key} = {_toml_value(value)}")
            lines.append("")
        path = tmp_path / name
        path.write_text("\n".join(lines), encoding="utf-8")
        return path

    return _write


def _toml_value(value: object) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (str, Path)):
        return f'"{value}"'
    return repr(value)
