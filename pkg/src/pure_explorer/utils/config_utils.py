"""Utility functions for loading experiment and training configuration files."""

import os
import warnings
from pathlib import Path
from typing import Any, Dict

from pydantic import ValidationError

from pure_explorer.config import ENV_OUTPUT_DIR, ENV_SEED
from pure_explorer.schemas import ExperimentConfig, TrainingConfig
from pure_explorer.utils.exceptions import InvalidConfigError

try:
    import tomllib  # type: ignore[import]
except ImportError:
    import tomli as tomllib

_EXPERIMENT_SECTIONS = {"experiment", "mode", "params", "training"}


def _read_toml(path: Path) -> Dict[str, Any]:
    if not path.is_file():
        raise FileNotFoundError(f"Configuration file not found: {path}")
    with path.open("rb") as f:
        return tomllib.load(f)


def apply_env_overrides(config: ExperimentConfig) -> ExperimentConfig:
    """Override the output directory and master seed from ``PURE_EXPLORER_OUTPUT_DIR`` / ``PURE_EXPLORER_SEED``."""
    update: Dict[str, Any] = {}
    if os.getenv(ENV_OUTPUT_DIR):
        update["output_dir"] = Path(os.environ[ENV_OUTPUT_DIR])
    if os.getenv(ENV_SEED):
        try:
            update["master_seed"] = int(os.environ[ENV_SEED])
        except ValueError as exc:
            raise InvalidConfigError(ENV_SEED, f"expected an integer, got {os.environ[ENV_SEED]!r}") from exc
    return config.model_copy(update=update) if update else config


def load_experiment_config(path: Path) -> ExperimentConfig:
    """
    Load an experiment from a TOML file.

    The file has an ``[experiment]`` table (prior, algorithm, counts, seed, output directory, checkpoint), a
    ``[mode]`` table, and optional ``[params]`` and ``[training]`` tables. Unknown tables are ignored with a
    warning. Environment-variable overrides are applied last.

    Parameters
    ----------
    path : Path
        The TOML file.

    Returns
    -------
    ExperimentConfig
        The validated configuration.

    Raises
    ------
    InvalidConfigError
        If the file is not valid TOML or a value fails validation.
    """
    path = Path(path)
    try:
        data = _read_toml(path)
    except tomllib.TOMLDecodeError as exc:
        raise InvalidConfigError(str(path), f"invalid TOML ({exc})") from exc

    unknown = set(data) - _EXPERIMENT_SECTIONS
    if unknown:
        warnings.warn(f"Ignoring unknown sections {sorted(unknown)} in {path}", UserWarning)

    fields = dict(data.get("experiment", {}))
    fields["mode"] = data.get("mode", {})
    if "params" in data:
        fields["params"] = data["params"]
    if "training" in data:
        fields["training"] = data["training"]
    try:
        config = ExperimentConfig.model_validate(fields)
    except ValidationError as exc:
        raise InvalidConfigError(str(path), str(exc)) from exc
    return apply_env_overrides(config)


def load_training_config(path: Path) -> TrainingConfig:
    """
    Load training hyperparameters from the ``[training]`` table of a TOML file.

    Invalid TOML falls back to the defaults with a warning; invalid values raise ``InvalidConfigError``.
    """
    path = Path(path)
    try:
        data = _read_toml(path)
    except tomllib.TOMLDecodeError as exc:
        warnings.warn(f"Invalid TOML in {path}: {exc}. Using default training settings.", UserWarning)
        return TrainingConfig()

    section = data.get("training", {})
    if not isinstance(section, dict):
        warnings.warn(f"Expected a [training] table in {path}, got {type(section)}. Using defaults.", UserWarning)
        return TrainingConfig()
    try:
        return TrainingConfig.model_validate(section)
    except ValidationError as exc:
        raise InvalidConfigError(str(path), str(exc)) from exc
