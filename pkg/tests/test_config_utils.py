"""Tests for loading experiment and training configuration files."""

from pathlib import Path

import pytest
from _pytest.monkeypatch import MonkeyPatch

from pure_explorer.config import ENV_OUTPUT_DIR, ENV_SEED
from pure_explorer.schemas import TrainingConfig
from pure_explorer.utils.config_utils import load_experiment_config, load_training_config
from pure_explorer.utils.exceptions import InvalidConfigError
from tests.conftest import WriteConfigFunc

EXPERIMENT = {
    "experiment": {"prior": "two-model-det", "algorithm": "exact", "seeds": 2, "envs_per_seed": 3},
    "mode": {"kind": "fixed_budget", "n": 1},
}


@pytest.fixture(autouse=True)
def _clean_env(monkeypatch: MonkeyPatch) -> None:
    monkeypatch.delenv(ENV_OUTPUT_DIR, raising=False)
    monkeypatch.delenv(ENV_SEED, raising=False)


def test_load_experiment_config(write_config: WriteConfigFunc) -> None:
    path = write_config("exp.toml", {**EXPERIMENT, "params": {"quantize": True}})

    config = load_experiment_config(path)

    assert config.prior == "two-model-det"
    assert config.mode.n == 1
    assert (config.seeds, config.envs_per_seed, config.trajectories_per_env) == (2, 3, 1)
    assert config.params == {"quantize": True}


def test_environment_overrides(write_config: WriteConfigFunc, monkeypatch: MonkeyPatch, tmp_path: Path) -> None:
    """
    Test the environment-variable overrides.

    Given an experiment file and both override variables set:
    When loading it,
    Then the output directory and master seed come from the environment.
    """
    monkeypatch.setenv(ENV_OUTPUT_DIR, str(tmp_path / "out"))
    monkeypatch.setenv(ENV_SEED, "42")

    config = load_experiment_config(write_config("exp.toml", EXPERIMENT))

    assert config.output_dir == tmp_path / "out"
    assert config.master_seed == 42


def test_bad_seed_override(write_config: WriteConfigFunc, monkeypatch: MonkeyPatch) -> None:
    monkeypatch.setenv(ENV_SEED, "forty-two")

    with pytest.raises(InvalidConfigError, match=ENV_SEED):
        load_experiment_config(write_config("exp.toml", EXPERIMENT))


def test_invalid_toml(tmp_path: Path) -> None:
    path = tmp_path / "broken.toml"
    path.write_text("[experiment\nprior = ", encoding="utf-8")

    with pytest.raises(InvalidConfigError, match="invalid TOML"):
        load_experiment_config(path)


def test_invalid_value(write_config: WriteConfigFunc) -> None:
    tables = {"experiment": {**EXPERIMENT["experiment"], "seeds": 0}, "mode": EXPERIMENT["mode"]}

    with pytest.raises(InvalidConfigError):
        load_experiment_config(write_config("exp.toml", tables))


def test_unknown_section_warns(write_config: WriteConfigFunc) -> None:
    path = write_config("exp.toml", {**EXPERIMENT, "plotting": {"dpi": 300}})

    with pytest.warns(UserWarning, match="plotting"):
        config = load_experiment_config(path)

    assert config.algorithm == "exact"


def test_missing_file(tmp_path: Path) -> None:
    with pytest.raises(FileNotFoundError):
        load_experiment_config(tmp_path / "absent.toml")


def test_load_training_config(write_config: WriteConfigFunc) -> None:
    path = write_config("train.toml", {"training": {"epochs": 7, "lr": 0.01}, "training.model": {"d_model": 16}})

    config = load_training_config(path)

    assert config.epochs == 7
    assert config.lr == 0.01
    assert config.model.d_model == 16


def test_training_config_falls_back_on_invalid_toml(tmp_path: Path) -> None:
    path = tmp_path / "train.toml"
    path.write_text("[training\n", encoding="utf-8")

    with pytest.warns(UserWarning, match="Invalid TOML"):
        config = load_training_config(path)

    assert config == TrainingConfig()


def test_training_config_rejects_bad_values(write_config: WriteConfigFunc) -> None:
    with pytest.raises(InvalidConfigError):
        load_training_config(write_config("train.toml", {"training": {"epochs": 0}}))
