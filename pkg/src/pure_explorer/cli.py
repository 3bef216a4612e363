"""Command-line interface for the pure_explorer package."""

# pylint: disable=no-value-for-parameter

import csv
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import click
from dotenv import load_dotenv

from pure_explorer.bounds import bound_table, magic_char_time, min_gap_bounds
from pure_explorer.cert import trigger_epoch
from pure_explorer.config import DEFAULT_BOOTSTRAP_REPS, DEFAULT_OBS_CELLS, EVAL_ROLLOUTS, OUTPUT_DIR
from pure_explorer.core import EpisodeMode, RandomSource
from pure_explorer.envs import make_prior
from pure_explorer.exact import dual_search, solve_fixed_budget, solve_fixed_confidence
from pure_explorer.harness import REPORTS, load_run, run_and_save, write_report
from pure_explorer.learner.trainer import final_certificate, read_metrics, train
from pure_explorer.posterior import ObservationGrid
from pure_explorer.schemas import ModeConfig, TrainingConfig
from pure_explorer.stats import hierarchical_bootstrap
from pure_explorer.utils.config_utils import load_experiment_config, load_training_config


def _parse_range(text: str) -> List[int]:
    """``"3"``, ``"1..9"`` or ``"1,2,5"``."""
    if ".." in text:
        low, high = text.split("..", 1)
        return list(range(int(low), int(high) + 1))
    return [int(part) for part in text.split(",") if part]


def _parse_floats(text: str) -> List[float]:
    return [float(part) for part in text.split(",") if part]


def _mode(budget: Optional[int], delta: Optional[float], n_max: Optional[int]) -> EpisodeMode:
    try:
        if budget is not None and delta is None:
            return ModeConfig.budget(budget).to_mode()
        if budget is None and delta is not None and n_max is not None:
            return ModeConfig.confidence(delta, n_max).to_mode()
    except ValueError as exc:
        raise click.BadParameter(str(exc)) from exc
    raise click.UsageError("Give either --budget, or --delta together with --n-max")


def _emit_rows(rows: Sequence[Dict[str, Any]], output: Optional[str]) -> None:
    """Write rows as CSV to ``output`` or to stdout."""
    if not rows:
        return
    if output is None:
        writer = csv.DictWriter(sys.stdout, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
        return
    path = Path(output)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
    click.echo(f"Wrote {len(rows)} rows to {path}", err=True)


def _fail(exc: Exception) -> click.Abort:
    # Convert any exception into Click.Abort so that exit status is non-zero
    click.echo(f"Error: {exc}", err=True)
    return click.Abort()


_mode_options = [
    click.option("--budget", "-N", type=int, default=None, help="Fixed query budget"),
    click.option("--delta", type=float, default=None, help="Target error probability (fixed confidence)"),
    click.option("--n-max", type=int, default=None, help="Forced-stop horizon (fixed confidence)"),
]


def mode_options(func):
    for option in reversed(_mode_options):
        func = option(func)
    return func


@click.group()
@click.option("--verbose", "-v", is_flag=True, help="Log debug messages")
def main(verbose: bool) -> None:
    """Active sequential hypothesis testing: exact solvers, meta-trained explorers, baselines and bounds."""
    load_dotenv()
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
        stream=sys.stderr,
    )


@main.command("train")
@click.option("--prior", "-p", required=True, help="Prior preset name, e.g. deterministic-4 or binary-search-8")
@mode_options
@click.option("--config", "-c", "config_path", type=click.Path(), default=None, help="TOML file with [training]")
@click.option("--epochs", type=int, default=None, help="Override the number of epochs")
@click.option("--seed", type=int, default=0, show_default=True, help="Master seed")
@click.option("--certify", is_flag=True, help="Run the anytime correctness test and freeze when it triggers")
@click.option("--output", "-o", type=click.Path(), default=str(OUTPUT_DIR / "train"), show_default=True)
@click.option("--no-progress", is_flag=True, help="Hide the progress bar")
def train_command(
    prior: str,
    budget: Optional[int],
    delta: Optional[float],
    n_max: Optional[int],
    config_path: Optional[str],
    epochs: Optional[int],
    seed: int,
    certify: bool,
    output: str,
    no_progress: bool,
) -> None:
    """
    Meta-train inference and Q networks on a prior and write a checkpoint plus a metrics log.

    Parameters
    ----------
    prior : str
        Prior preset name.
    budget, delta, n_max
        Episode mode: ``--budget`` alone, or ``--delta`` with ``--n-max``.
    config_path : str, optional
        TOML file whose ``[training]`` table holds the hyperparameters.
    epochs : int, optional
        Overrides the configured number of epochs.
    seed : int
        Master seed of every random stream.
    certify : bool
        Enable the sequential certification test.
    output : str
        Output directory.
    no_progress : bool
        Disable the tqdm bar.
    """
    mode = _mode(budget, delta, n_max)
    try:
        config = load_training_config(Path(config_path)) if config_path else TrainingConfig()
        update: Dict[str, Any] = {}
        if epochs is not None:
            update["epochs"] = epochs
        if certify:
            update["certify"] = True
        if update:
            config = config.model_copy(update=update)
        spec = make_prior(prior)
        click.echo(f"Training on {prior} for {config.epochs} epochs, output in '{output}'...", err=True)
        state = train(spec, mode, config, RandomSource(seed), progress=not no_progress, output_dir=Path(output))
        report = final_certificate(state, EVAL_ROLLOUTS, RandomSource.from_ids(seed, 1 << 20))
    except Exception as exc:  # pylint: disable=broad-exception-caught
        raise _fail(exc) from exc

    click.echo(f"Training complete after {state.epoch} epochs.", err=True)
    if state.certified_at is not None:
        click.echo(f"Certified at epoch {state.certified_at}.", err=True)
    click.echo(
        f"correctness={report['correctness']:.4f} lower_bound={report['lower_bound']:.4f} "
        f"mean_tau={report['mean_tau']:.3f} cost={state.cost:.6f}"
    )


@main.command("eval")
@click.argument("config_path", type=click.Path())
@click.option("--workers", "-w", type=int, default=None, help="Override the number of worker processes")
@click.option("--output", "-o", type=click.Path(), default=None, help="Override the output directory")
@click.option("--no-progress", is_flag=True, help="Hide the progress bar")
def eval_command(config_path: str, workers: Optional[int], output: Optional[str], no_progress: bool) -> None:
    """Run the experiment described by a TOML file and write its result files and manifest."""
    try:
        cfg = load_experiment_config(Path(config_path))
        update: Dict[str, Any] = {}
        if workers is not None:
            update["workers"] = workers
        if output is not None:
            update["output_dir"] = Path(output)
        if update:
            cfg = cfg.model_copy(update=update)
        click.echo(f"Running {cfg.algorithm} on {cfg.prior}...", err=True)
        results, out = run_and_save(cfg, progress=not no_progress)
    except Exception as exc:  # pylint: disable=broad-exception-caught
        raise _fail(exc) from exc

    records = results.records()
    accuracy = sum(r.correct for r in records) / len(records)
    mean_tau = sum(r.tau for r in records) / len(records)
    click.echo(f"Results written to: {out}", err=True)
    click.echo(f"trajectories={len(records)} correctness={accuracy:.4f} mean_tau={mean_tau:.3f}")


@main.command("exact-solve")
@click.option("--prior", "-p", required=True, help="Finite prior preset name")
@mode_options
@click.option("--lam", type=float, default=None, help="Stop bonus; without it the smallest feasible one is searched")
@click.option("--cells", type=int, default=DEFAULT_OBS_CELLS, show_default=True, help="Observation cells")
@click.option("--collapse", is_flag=True, help="Key histories on per-arm cell multisets")
def exact_solve_command(
    prior: str,
    budget: Optional[int],
    delta: Optional[float],
    n_max: Optional[int],
    lam: Optional[float],
    cells: int,
    collapse: bool,
) -> None:
    """Solve a finite prior exactly and print the optimal value."""
    try:
        spec = make_prior(prior)
        grid = ObservationGrid.for_prior(spec, cells)
        if budget is not None and delta is None and n_max is None:
            table, value = solve_fixed_budget(spec, budget, obs_grid=grid, collapse=collapse)
            click.echo(f"Solved {len(table)} histories.", err=True)
            click.echo(f"value={value:.6f}")
            return
        mode = _mode(budget, delta, n_max)
        if lam is not None:
            table, value, correctness, tau = solve_fixed_confidence(
                spec, lam, mode.n_max, mode.delta, obs_grid=grid, collapse=collapse
            )
            click.echo(f"value={value:.6f} correctness={correctness:.6f} expected_tau={tau:.6f}")
        else:
            found, table = dual_search(spec, mode.delta, mode.n_max, obs_grid=grid, collapse=collapse)
            click.echo(f"lambda={found:.6f} correctness={table.correctness:.6f} expected_tau={table.expected_tau:.6f}")
        click.echo(f"Solved {len(table)} histories.", err=True)
    except click.UsageError:
        raise
    except Exception as exc:  # pylint: disable=broad-exception-caught
        raise _fail(exc) from exc


@main.group("bounds")
def bounds_group() -> None:
    """Tabulate sample-complexity bounds."""


@bounds_group.command("multi-magic")
@click.option("--K", "k", type=int, required=True, help="Number of arms")
@click.option("--n", "n_values", type=str, required=True, help="Chain lengths, e.g. 1..9")
@click.option("--output", "-o", type=click.Path(), default=None, help="CSV file (default: stdout)")
def multi_magic_command(k: int, n_values: str, output: Optional[str]) -> None:
    """Expected-query bound for chains of magic actions, one row per chain length."""
    try:
        rows = bound_table(k, _parse_range(n_values))
    except Exception as exc:  # pylint: disable=broad-exception-caught
        raise _fail(exc) from exc
    _emit_rows(rows, output)


@bounds_group.command("min-gap")
@click.option("--mu", required=True, help="Comma-separated means")
@click.option("--sigma", type=float, default=1.0, show_default=True)
@click.option("--delta0", type=float, required=True, help="Declared minimum gap")
@click.option("--delta", type=float, required=True, help="Error probability")
def min_gap_command(mu: str, sigma: float, delta0: float, delta: float) -> None:
    """Lower and upper sample-complexity bounds under a minimum-gap prior."""
    try:
        result = min_gap_bounds(_parse_floats(mu), sigma, delta0, delta)
    except Exception as exc:  # pylint: disable=broad-exception-caught
        raise _fail(exc) from exc
    _emit_rows([{"lower": result.lower, "upper": result.upper}], None)


@bounds_group.command("magic")
@click.option("--mu", required=True, help="Comma-separated means, the magic arm first")
@click.option("--sigma", type=float, default=1.0, show_default=True)
@click.option("--sigma-m", type=float, required=True, help="Noise of the magic arm")
@click.option("--delta", type=float, default=None)
@click.option("--seed", type=int, default=0, show_default=True)
def magic_command(mu: str, sigma: float, sigma_m: float, delta: Optional[float], seed: int) -> None:
    """Characteristic time and optimal allocation of a single-magic-action bandit."""
    try:
        result = magic_char_time(_parse_floats(mu), sigma, sigma_m, delta=delta, rng=RandomSource(seed))
    except Exception as exc:  # pylint: disable=broad-exception-caught
        raise _fail(exc) from exc
    row = {"characteristic_time": result.characteristic_time, "lower": result.lower}
    row.update({f"w{i}": float(w) for i, w in enumerate(result.witness_weights)})
    _emit_rows([row], None)


@main.command("certify")
@click.argument("metrics_path", type=click.Path())
@click.option("--delta-prime", type=float, default=0.1, show_default=True, help="Certified error level")
@click.option("--eta", type=float, default=0.05, show_default=True, help="Test error probability")
@click.option("--batch", type=int, default=EVAL_ROLLOUTS, show_default=True, help="Evaluation rollouts per epoch")
def certify_command(metrics_path: str, delta_prime: float, eta: float, batch: int) -> None:
    """Replay the anytime correctness test over the p_hat column of a metrics log."""
    try:
        metrics = read_metrics(Path(metrics_path))
        epoch = trigger_epoch([m.p_hat for m in metrics], batch, delta_prime, eta)
    except Exception as exc:  # pylint: disable=broad-exception-caught
        raise _fail(exc) from exc
    if epoch is None:
        click.echo(f"Not certified after {len(metrics)} epochs.")
    else:
        click.echo(f"Certified at epoch {epoch}.")


@main.command("bootstrap")
@click.argument("run_dir", type=click.Path())
@click.option("--metric", "-m", default="correct", show_default=True, help="correct, tau or an extra column")
@click.option("--reps", type=int, default=DEFAULT_BOOTSTRAP_REPS, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
def bootstrap_command(run_dir: str, metric: str, reps: int, seed: int) -> None:
    """Hierarchical-bootstrap confidence interval of a metric in a saved run."""
    try:
        run = load_run(Path(run_dir))
        result = hierarchical_bootstrap(run.results, metric, reps, RandomSource(seed))
    except Exception as exc:  # pylint: disable=broad-exception-caught
        raise _fail(exc) from exc
    _emit_rows([{"metric": metric, "mean": result.mean, "ci_low": result.ci_low, "ci_high": result.ci_high}], None)


@main.command("report")
@click.argument("name", type=click.Choice(sorted(REPORTS)))
@click.argument("run_dirs", nargs=-1, required=True, type=click.Path())
@click.option("--output", "-o", type=click.Path(), required=True, help="CSV file to write")
def report_command(name: str, run_dirs: Tuple[str, ...], output: str) -> None:
    """Assemble a report table from saved runs; each run must match its manifest and appear only once."""
    try:
        path = write_report(name, [Path(d) for d in run_dirs], Path(output))
    except Exception as exc:  # pylint: disable=broad-exception-caught
        raise _fail(exc) from exc
    click.echo(f"Report written to: {path}")


if __name__ == "__main__":
    main()
