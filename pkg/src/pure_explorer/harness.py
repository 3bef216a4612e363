"""
Configuration-driven experiment runner.

Every ``(seed, environment, trajectory)`` cell draws from its own random stream, derived from the master seed and
the cell's ids rather than from draw order. Two algorithms run under the same master seed therefore face the
same environments and, for the same query sequence, the same observations.
"""

from __future__ import annotations

import hashlib
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from pure_explorer.baselines import (
    ApproxTrackAndStopPolicy,
    ExploreThenCommitPolicy,
    InformationDirectedPolicy,
    PosteriorGreedyPolicy,
    ThompsonPolicy,
    TopTwoPolicy,
    TrackAndStopPolicy,
    UCBPolicy,
    UniformPolicy,
)
from pure_explorer.config import (
    DEFAULT_BOOTSTRAP_REPS,
    IIDS_GRID_SIZE,
    SUMMARY_FILE_NAME,
    TOP_TWO_BETA,
    TRAJECTORIES_FILE_NAME,
)
from pure_explorer.core import EpisodeMode, FixedConfidence, Policy, RandomSource, rollout
from pure_explorer.envs import PriorSpec, sample_env
from pure_explorer.exact import TablePolicy, dual_search, solve_fixed_budget
from pure_explorer.learner.trainer import LearnerState, load_checkpoint
from pure_explorer.posterior import ObservationGrid, PosteriorInference
from pure_explorer.schemas import ExperimentConfig
from pure_explorer.stats import NestedResults, TrajectoryRecord, hierarchical_bootstrap, summarize, survival_curve
from pure_explorer.utils.exceptions import (
    CheckpointMissingError,
    ConfigHashMismatchError,
    DuplicateRunError,
    UnknownAlgorithmError,
)
from pure_explorer.utils.io_utils import read_manifest, read_records, write_manifest, write_records, write_table

logger = logging.getLogger(__name__)

_ENV_STREAM = 0
_TRAJECTORY_STREAM = 1


@dataclass(frozen=True)
class AlgorithmContext:
    """What an algorithm factory may use to build its policy."""

    spec: PriorSpec
    mode: EpisodeMode
    params: Dict[str, Any]
    checkpoint: Optional[Path]

    @property
    def delta(self) -> Optional[float]:
        return self.mode.delta if isinstance(self.mode, FixedConfidence) else None

    @property
    def sigma(self) -> float:
        return float(self.params.get("sigma", self.spec.regular_sigma or 1.0))

    def exact_inference(self) -> PosteriorInference:
        grid = ObservationGrid.for_prior(self.spec) if self.params.get("quantize", False) else None
        return PosteriorInference(self.spec, grid)

    def learner(self) -> LearnerState:
        if self.checkpoint is None:
            raise CheckpointMissingError("<no checkpoint configured>")
        return load_checkpoint(self.checkpoint, self.spec)

    def inference(self):
        """The exact posterior on finite priors, otherwise the learned inference network of the checkpoint."""
        if self.spec.is_finite and self.checkpoint is None:
            return self.exact_inference()
        return self.learner().infer


AlgorithmFactory = Callable[[AlgorithmContext], Policy]
_REGISTRY: Dict[str, AlgorithmFactory] = {}


def register(name: str) -> Callable[[AlgorithmFactory], AlgorithmFactory]:
    def decorator(factory: AlgorithmFactory) -> AlgorithmFactory:
        _REGISTRY[name] = factory
        return factory

    return decorator


def registered_algorithms() -> List[str]:
    return sorted(_REGISTRY)


def get_algorithm(name: str) -> AlgorithmFactory:
    try:
        return _REGISTRY[name]
    except KeyError as exc:
        raise UnknownAlgorithmError(name, _REGISTRY) from exc


@register("uniform")
def _uniform(ctx: AlgorithmContext) -> Policy:
    return UniformPolicy(ctx.sigma, ctx.delta)


@register("tas")
def _tas(ctx: AlgorithmContext) -> Policy:
    return TrackAndStopPolicy(ctx.sigma, ctx.delta)


@register("approx-tas")
def _approx_tas(ctx: AlgorithmContext) -> Policy:
    return ApproxTrackAndStopPolicy(ctx.sigma, ctx.delta, linear=bool(ctx.params.get("linear", False)))


@register("top-two")
def _top_two(ctx: AlgorithmContext) -> Policy:
    return TopTwoPolicy(ctx.sigma, ctx.delta, beta=float(ctx.params.get("beta", TOP_TWO_BETA)))


@register("ucb")
def _ucb(ctx: AlgorithmContext) -> Policy:
    return UCBPolicy(ctx.sigma)


@register("thompson")
def _thompson(ctx: AlgorithmContext) -> Policy:
    return ThompsonPolicy(ctx.sigma)


@register("iids")
def _iids(ctx: AlgorithmContext) -> Policy:
    grid_size = int(ctx.params.get("grid_size", IIDS_GRID_SIZE))
    return InformationDirectedPolicy(ctx.inference(), sigma=ctx.sigma, delta=ctx.delta, grid_size=grid_size)


@register("idpt")
def _idpt(ctx: AlgorithmContext) -> Policy:
    return PosteriorGreedyPolicy(ctx.inference(), ctx.delta)


@register("exact")
def _exact(ctx: AlgorithmContext) -> Policy:
    if isinstance(ctx.mode, FixedConfidence):
        _, table = dual_search(ctx.spec, ctx.mode.delta, ctx.mode.n_max)
    else:
        table, _ = solve_fixed_budget(ctx.spec, ctx.mode.n)
    return TablePolicy(table)


@register("learned")
def _learned(ctx: AlgorithmContext) -> Policy:
    return ctx.learner().policy()


@register("etc")
def _etc(ctx: AlgorithmContext) -> Policy:
    state = ctx.learner()
    return ExploreThenCommitPolicy(state.q, state.infer)


def build_policy(cfg: ExperimentConfig) -> Policy:
    factory = get_algorithm(cfg.algorithm)
    if cfg.checkpoint is not None and not Path(cfg.checkpoint).exists():
        raise CheckpointMissingError(str(cfg.checkpoint))
    ctx = AlgorithmContext(cfg.resolve_prior(), cfg.mode.to_mode(), dict(cfg.params), cfg.checkpoint)
    return factory(ctx)


_WORKER_POLICIES: Dict[str, Policy] = {}


def _cached_policy(cfg: ExperimentConfig) -> Policy:
    key = cfg.config_hash()
    if key not in _WORKER_POLICIES:
        _WORKER_POLICIES[key] = build_policy(cfg)
    return _WORKER_POLICIES[key]


def run_cell(cfg: ExperimentConfig, seed: int, env_id: int, policy: Optional[Policy] = None) -> List[TrajectoryRecord]:
    """Sample environment ``env_id`` of ``seed`` and run every trajectory on it."""
    policy = policy or _cached_policy(cfg)
    spec, mode = cfg.resolve_prior(), cfg.mode.to_mode()
    env = sample_env(spec, RandomSource.from_ids(cfg.master_seed, seed, env_id, _ENV_STREAM))
    records = []
    for n in range(cfg.trajectories_per_env):
        rng = RandomSource.from_ids(cfg.master_seed, seed, env_id, _TRAJECTORY_STREAM, n)
        result = rollout(env, policy, mode, rng)
        actions = np.asarray(result.history.actions, dtype=int)
        pulls = np.bincount(actions, minlength=env.n_arms) if actions.size else np.zeros(env.n_arms, dtype=int)
        extra = {"unique_fraction": float(np.count_nonzero(pulls)) / env.n_arms}
        extra.update({f"pulls_{a}": float(count) for a, count in enumerate(pulls)})
        records.append(
            TrajectoryRecord(
                seed=seed,
                env=env_id,
                trajectory=n,
                correct=bool(policy.recommend(result.history) == result.hypothesis),
                tau=int(actions.size),
                extra=extra,
            )
        )
    return records


def _run_cell_job(job: Tuple[ExperimentConfig, int, int]) -> List[TrajectoryRecord]:
    return run_cell(*job)


def run_experiment(cfg: ExperimentConfig, progress: bool = False) -> NestedResults:
    """
    Run every ``(seed, environment, trajectory)`` cell of an experiment.

    Parameters
    ----------
    cfg : ExperimentConfig
        The experiment; ``cfg.workers > 1`` fans environments out over a process pool.
    progress : bool
        Show a tqdm progress bar over environments.

    Returns
    -------
    NestedResults
        Records in canonical ``(seed, env, trajectory)`` order, independent of completion order.

    Raises
    ------
    UnknownAlgorithmError
        If ``cfg.algorithm`` is not registered.
    CheckpointMissingError
        If a learned policy's checkpoint does not exist.
    """
    policy = build_policy(cfg)
    jobs = [(cfg, s, e) for s in range(cfg.seeds) for e in range(cfg.envs_per_seed)]
    logger.info("Running %s on %d environments with %d worker(s)", cfg.algorithm, len(jobs), cfg.workers)

    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            chunks = list(tqdm(pool.map(_run_cell_job, jobs), total=len(jobs), disable=not progress, desc="eval"))
    else:
        chunks = [run_cell(c, s, e, policy) for c, s, e in tqdm(jobs, disable=not progress, desc="eval")]

    records = sorted((r for chunk in chunks for r in chunk), key=lambda r: (r.seed, r.env, r.trajectory))
    return NestedResults.from_records(records)


def save_results(
    cfg: ExperimentConfig,
    results: NestedResults,
    timings: Optional[Dict[str, float]] = None,
    reps: int = DEFAULT_BOOTSTRAP_REPS,
) -> Path:
    """Write the trajectory records, a bootstrap summary and the manifest to ``cfg.output_dir``."""
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    config_hash = cfg.config_hash()
    records_path = write_records(results.records(), out / TRAJECTORIES_FILE_NAME, config_hash)
    summary = summarize(results, reps=reps, rng=RandomSource.from_ids(cfg.master_seed, 1 << 20))
    rows = [{"metric": name, "mean": r.mean, "ci_low": r.ci_low, "ci_high": r.ci_high} for name, r in summary.items()]
    summary_path = write_table(rows, out / SUMMARY_FILE_NAME, config_hash)
    write_manifest(out, cfg.model_dump(mode="json"), config_hash, [records_path, summary_path], timings or {})
    return out


def run_and_save(cfg: ExperimentConfig, progress: bool = False) -> Tuple[NestedResults, Path]:
    start = time.perf_counter()
    results = run_experiment(cfg, progress=progress)
    elapsed = time.perf_counter() - start
    return results, save_results(cfg, results, timings={"run_seconds": elapsed})


# Reports


@dataclass
class RunData:
    config: ExperimentConfig
    results: NestedResults
    config_hash: str


def load_run(run_dir: Path) -> RunData:
    """
    Read a saved run and check that its trajectory file belongs to its manifest.

    Raises
    ------
    ConfigHashMismatchError
        If the trajectory file carries a different config hash than the manifest.
    """
    run_dir = Path(run_dir)
    manifest = read_manifest(run_dir)
    records, found = read_records(run_dir / TRAJECTORIES_FILE_NAME)
    if found != manifest["config_hash"]:
        raise ConfigHashMismatchError(manifest["config_hash"], found or "", str(run_dir / TRAJECTORIES_FILE_NAME))
    cfg = ExperimentConfig.model_validate(manifest["config"])
    return RunData(cfg, NestedResults.from_records(records), manifest["config_hash"])


def combined_hash(runs: Sequence[RunData]) -> str:
    digest = hashlib.sha256()
    for h in sorted(run.config_hash for run in runs):
        digest.update(h.encode())
    return digest.hexdigest()


def _run_k(run: RunData) -> int:
    return run.config.resolve_prior().k


def stopping_time_report(runs: Sequence[RunData], reps: int = DEFAULT_BOOTSTRAP_REPS) -> List[Dict[str, Any]]:
    """Mean stopping time with a hierarchical-bootstrap interval, one row per run, sorted by (algorithm, K)."""
    rows = []
    for run in runs:
        ci = hierarchical_bootstrap(run.results, "tau", reps, RandomSource.from_ids(run.config.master_seed, 1 << 21))
        rows.append(
            {
                "algorithm": run.config.algorithm,
                "K": _run_k(run),
                "mean_tau": ci.mean,
                "ci_low": ci.ci_low,
                "ci_high": ci.ci_high,
            }
        )
    return sorted(rows, key=lambda r: (r["algorithm"], r["K"]))


def correctness_report(runs: Sequence[RunData], reps: int = DEFAULT_BOOTSTRAP_REPS) -> List[Dict[str, Any]]:
    rows = []
    for run in runs:
        rng = RandomSource.from_ids(run.config.master_seed, 1 << 22)
        ci = hierarchical_bootstrap(run.results, "correct", reps, rng)
        rows.append(
            {
                "algorithm": run.config.algorithm,
                "K": _run_k(run),
                "correctness": ci.mean,
                "ci_low": ci.ci_low,
                "ci_high": ci.ci_high,
            }
        )
    return sorted(rows, key=lambda r: (r["algorithm"], r["K"]))


def survival_report(runs: Sequence[RunData], t_grid: Optional[Sequence[int]] = None) -> List[Dict[str, Any]]:
    """Empirical ``P(tau > t)`` per run on a shared grid (default ``0..max tau``)."""
    taus = {id(run): [r.tau for r in run.results.records()] for run in runs}
    if t_grid is None:
        t_grid = range(max(max(t) for t in taus.values()) + 1)
    t_grid = list(t_grid)
    rows = []
    for run in runs:
        curve = survival_curve(taus[id(run)], t_grid)
        for t, s in zip(t_grid, curve):
            rows.append({"algorithm": run.config.algorithm, "K": _run_k(run), "t": int(t), "survival": float(s)})
    return rows


def binary_search_report(runs: Sequence[RunData]) -> List[Dict[str, Any]]:
    """
    One row per number of targets: worst per-seed accuracy, mean and max stopping time, and ``ceil(log2 K)``.
    """
    rows = []
    for run in sorted(runs, key=_run_k):
        k = _run_k(run)
        per_seed = [
            np.mean([r.correct for trajectories in envs.values() for r in trajectories])
            for envs in run.results.levels.values()
        ]
        taus = np.array([r.tau for r in run.results.records()])
        rows.append(
            {
                "K": k,
                "min_accuracy": float(np.min(per_seed)),
                "mean_stop": float(taus.mean()),
                "std_stop": float(taus.std()),
                "max_stop": int(taus.max()),
                "log2_K": int(math.ceil(math.log2(k))),
            }
        )
    return rows


REPORTS: Dict[str, Callable[[Sequence[RunData]], List[Dict[str, Any]]]] = {
    "stopping-time": stopping_time_report,
    "correctness": correctness_report,
    "survival": survival_report,
    "binary-search": binary_search_report,
}


def load_runs(run_dirs: Sequence[Path]) -> List[RunData]:
    """
    Load several saved runs for one report.

    Raises
    ------
    DuplicateRunError
        If two directories hold runs of the same configuration.
    """
    runs: List[RunData] = []
    seen: Dict[str, Path] = {}
    for run_dir in run_dirs:
        run = load_run(run_dir)
        if run.config_hash in seen:
            raise DuplicateRunError(run.config_hash, str(seen[run.config_hash]), str(run_dir))
        seen[run.config_hash] = Path(run_dir)
        runs.append(run)
    return runs


def write_report(name: str, run_dirs: Sequence[Path], output: Path) -> Path:
    runs = load_runs(run_dirs)
    rows = REPORTS[name](runs)
    return write_table(rows, output, combined_hash(runs))
