"""Tests for the pure-explorer CLI."""

from inspect import signature
from pathlib import Path
from typing import List

import pytest
from _pytest.monkeypatch import MonkeyPatch
from click.testing import CliRunner, Result

from pure_explorer.cli import main
from pure_explorer.config import CHECKPOINT_FILE_NAME, ENV_OUTPUT_DIR, ENV_SEED, METRICS_FILE_NAME
from pure_explorer.learner.trainer import EpochMetrics, write_metrics
from tests.conftest import WriteConfigFunc


@pytest.fixture(autouse=True)
def _isolated(tmp_path: Path, monkeypatch: MonkeyPatch) -> None:
    # Work inside an isolated temp directory so that no .env file or output leaks in
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv(ENV_OUTPUT_DIR, raising=False)
    monkeypatch.delenv(ENV_SEED, raising=False)


@pytest.mark.parametrize(
    "cli_args, expected",
    [
        pytest.param(["-p", "two-model-det", "--budget", "1"], "value=1.000000", id="fixed-budget"),
        pytest.param(["-p", "two-model-det", "--budget", "0"], "value=0.500000", id="prior-only"),
        pytest.param(["-p", "two-model-det", "--delta", "0.9", "--n-max", "4"], None, id="delta-out-of-range"),
        pytest.param(
            ["-p", "two-model-det", "--delta", "0.1", "--n-max", "4", "--lam", "10"],
            "value=9.000000 correctness=1.000000 expected_tau=1.000000",
            id="given-bonus",
        ),
    ],
)
def test_exact_solve(cli_args: List[str], expected) -> None:
    result = _invoke_isolated_cli_runner(["exact-solve", *cli_args])

    if expected is None:
        assert result.exit_code != 0
        return
    assert result.exit_code == 0, result.stderr
    assert expected in result.stdout.splitlines()
    assert "histories" in result.stderr


def test_exact_solve_searches_bonus() -> None:
    result = _invoke_isolated_cli_runner(["exact-solve", "-p", "two-model-det", "--delta", "0.1", "--n-max", "4"])

    assert result.exit_code == 0, result.stderr
    fields = dict(part.split("=") for part in result.stdout.split())
    assert 2.0 < float(fields["lambda"]) <= 2.001
    assert float(fields["correctness"]) >= 0.9


def test_exact_solve_needs_a_mode() -> None:
    result = _invoke_isolated_cli_runner(["exact-solve", "-p", "two-model-det"])

    assert result.exit_code == 2
    assert "--budget" in result.stderr


def test_unknown_prior_is_reported() -> None:
    result = _invoke_isolated_cli_runner(["exact-solve", "-p", "no-such-prior", "--budget", "1"])

    assert result.exit_code != 0
    assert "Error:" in result.stderr
    assert "no-such-prior" in result.stderr


def test_multi_magic_table_to_stdout() -> None:
    """
    Test the multi-magic bound table.

    Given K = 10 and chain lengths 1..9:
    When printing to stdout,
    Then a header and nine rows are written, with the single-action bound equal to one query.
    """
    result = _invoke_isolated_cli_runner(["bounds", "multi-magic", "--K", "10", "--n", "1..9"])

    assert result.exit_code == 0, result.stderr
    lines = result.stdout.splitlines()
    assert lines[0] == "K,n,recursion,closed_form,upper"
    assert len(lines) == 10
    assert lines[1].split(",")[-1] == "1.0"


def test_multi_magic_table_to_file(tmp_path: Path) -> None:
    result = _invoke_isolated_cli_runner(["bounds", "multi-magic", "--K", "5", "--n", "1,2", "-o", "b.csv"])

    assert result.exit_code == 0, result.stderr
    assert len((tmp_path / "b.csv").read_text(encoding="utf-8").splitlines()) == 3
    assert "Wrote 2 rows" in result.stderr


def test_min_gap_bounds_command() -> None:
    result = _invoke_isolated_cli_runner(
        ["bounds", "min-gap", "--mu", "1,0.5,0", "--delta0", "0.4", "--delta", "0.05"]
    )

    assert result.exit_code == 0, result.stderr
    header, row = result.stdout.splitlines()
    lower, upper = (float(v) for v in row.split(","))
    assert header == "lower,upper"
    assert 0.0 < lower <= upper


def test_min_gap_violation_fails() -> None:
    result = _invoke_isolated_cli_runner(["bounds", "min-gap", "--mu", "1,0.9", "--delta0", "0.4", "--delta", "0.05"])

    assert result.exit_code != 0
    assert "Error:" in result.stderr


@pytest.mark.parametrize(
    "p_hat, expected",
    [
        pytest.param(1.0, "Certified at epoch 31.", id="certified"),
        pytest.param(0.5, "Not certified after 40 epochs.", id="not-certified"),
    ],
)
def test_certify(tmp_path: Path, p_hat: float, expected: str) -> None:
    metrics = [EpochMetrics(e, 0.1, 0.1, p_hat, 0.05, 0.0, 1.0, False) for e in range(40)]
    write_metrics(metrics, tmp_path / METRICS_FILE_NAME)

    result = _invoke_isolated_cli_runner(["certify", METRICS_FILE_NAME, "--batch", "64"])

    assert result.exit_code == 0, result.stderr
    assert result.stdout.strip() == expected


def test_certify_missing_log() -> None:
    result = _invoke_isolated_cli_runner(["certify", "absent.csv"])

    assert result.exit_code != 0
    assert "Metrics log not found" in result.stderr


def test_train_writes_checkpoint(tmp_path: Path, write_config: WriteConfigFunc) -> None:
    """
    Test a tiny training run from the command line.

    Given a training file with two epochs of a small network:
    When running ``train`` on a fixed budget,
    Then the checkpoint and the metrics log are written and a summary line is printed.
    """
    config = write_config(
        "train.toml",
        {
            "training": {
                "epochs": 2,
                "episodes_per_epoch": 2,
                "gradient_steps": 1,
                "batch_size": 4,
                "eval_rollouts": 2,
            },
            "training.model": {"d_model": 8, "n_layers": 1, "n_heads": 2},
        },
    )

    result = _invoke_isolated_cli_runner(
        ["train", "-p", "two-model-det", "--budget", "1", "-c", str(config), "-o", "out", "--no-progress"]
    )

    assert result.exit_code == 0, result.stderr
    assert (tmp_path / "out" / CHECKPOINT_FILE_NAME).is_file()
    assert (tmp_path / "out" / METRICS_FILE_NAME).is_file()
    assert result.stdout.startswith("correctness=")
    assert "Training complete after 2 epochs." in result.stderr


def test_eval_bootstrap_and_report(tmp_path: Path, write_config: WriteConfigFunc) -> None:
    """
    Test the evaluation pipeline end to end.

    Given an experiment file for the exact solver:
    When running ``eval``, then ``bootstrap`` and ``report`` on the saved run,
    Then each command succeeds, the report file is written, and a report over the same run twice is refused.
    """
    config = write_config(
        "exp.toml",
        {
            "experiment": {"prior": "two-model-det", "algorithm": "exact", "seeds": 2, "envs_per_seed": 2},
            "mode": {"kind": "fixed_budget", "n": 1},
        },
    )

    evaluated = _invoke_isolated_cli_runner(["eval", str(config), "-o", "run", "--no-progress"])
    boot = _invoke_isolated_cli_runner(["bootstrap", "run", "-m", "tau", "--reps", "200"])
    report = _invoke_isolated_cli_runner(["report", "stopping-time", "run", "-o", "report.csv"])
    repeated = _invoke_isolated_cli_runner(["report", "stopping-time", "run", "run", "-o", "twice.csv"])

    assert evaluated.exit_code == 0, evaluated.stderr
    assert "trajectories=4 correctness=1.0000 mean_tau=1.000" in evaluated.stdout.splitlines()
    assert boot.exit_code == 0, boot.stderr
    assert boot.stdout.splitlines()[1].startswith("tau,1.0,")
    assert report.exit_code == 0, report.stderr
    assert "Report written to: report.csv" in report.stdout.splitlines()
    assert (tmp_path / "report.csv").is_file()
    assert repeated.exit_code != 0
    assert "share config hash" in repeated.stderr


def test_eval_unknown_algorithm(write_config: WriteConfigFunc) -> None:
    config = write_config(
        "exp.toml",
        {"experiment": {"prior": "two-model-det", "algorithm": "oracle"}, "mode": {"kind": "fixed_budget", "n": 1}},
    )

    result = _invoke_isolated_cli_runner(["eval", str(config)])

    assert result.exit_code != 0
    assert "oracle" in result.stderr


def _invoke_isolated_cli_runner(args: List[str]) -> Result:
    """Return a CliRunner that keeps stderr apart on Click 8.0-8.1."""
    kwargs = {}
    if "mix_stderr" in signature(CliRunner.__init__).parameters:
        kwargs["mix_stderr"] = False  # Click 8.0–8.1
    runner = CliRunner(**kwargs)
    return runner.invoke(main, args)
