"""
Evaluation statistics over nested results (seed, environment, trajectory).

Confidence intervals come from a hierarchical bootstrap that resamples each level in turn, so that seed-level
variability is not washed out by the much larger number of trajectories. Before resampling, each level's
deviations are rescaled to its moment-estimated variance component; plain resampling of a few seeds shrinks the
seed term by ``(m - 1) / m`` and counts the inner levels twice.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, NamedTuple, Optional, Sequence, Union

import numpy as np

from pure_explorer.config import CONFIDENCE_LEVEL, DEFAULT_BOOTSTRAP_REPS
from pure_explorer.core import RandomSource
from pure_explorer.utils.exceptions import EmptyLevelError

_MIN_REPS = 100
_CHUNK_ELEMENTS = 2_000_000

Metric = Union[str, Callable[["TrajectoryRecord"], float]]


@dataclass(frozen=True)
class TrajectoryRecord:
    """Outcome of one evaluation trajectory."""

    seed: int
    env: int
    trajectory: int
    correct: bool
    tau: int
    extra: Dict[str, float] = field(default_factory=dict)

    def metric(self, metric: Metric) -> float:
        if callable(metric):
            return float(metric(self))
        if metric == "correct":
            return float(self.correct)
        if metric == "tau":
            return float(self.tau)
        return float(self.extra[metric])


class BootstrapResult(NamedTuple):
    mean: float
    ci_low: float
    ci_high: float


class NestedResults:
    """Trajectory records grouped by seed, then environment."""

    def __init__(self, levels: Dict[int, Dict[int, List[TrajectoryRecord]]]) -> None:
        if not levels:
            raise EmptyLevelError("seed")
        for seed, envs in levels.items():
            if not envs:
                raise EmptyLevelError("environment", f"seed {seed}")
            for env, trajectories in envs.items():
                if not trajectories:
                    raise EmptyLevelError("trajectory", f"seed {seed}, environment {env}")
        self.levels = levels

    @classmethod
    def from_records(cls, records: Iterable[TrajectoryRecord]) -> NestedResults:
        levels: Dict[int, Dict[int, List[TrajectoryRecord]]] = defaultdict(lambda: defaultdict(list))
        for record in records:
            levels[record.seed][record.env].append(record)
        return cls({seed: dict(envs) for seed, envs in levels.items()})

    @classmethod
    def from_array(cls, values: np.ndarray, metric: str = "value") -> NestedResults:
        """Build balanced results from a ``(seeds, envs, trajectories)`` array of metric values."""
        values = np.asarray(values, dtype=float)
        records = [
            TrajectoryRecord(seed=s, env=e, trajectory=n, correct=False, tau=0, extra={metric: float(values[s, e, n])})
            for s in range(values.shape[0])
            for e in range(values.shape[1])
            for n in range(values.shape[2])
        ]
        return cls.from_records(records)

    def records(self) -> List[TrajectoryRecord]:
        return [r for envs in self.levels.values() for trajectories in envs.values() for r in trajectories]

    def nested_values(self, metric: Metric) -> List[List[np.ndarray]]:
        return [
            [np.array([r.metric(metric) for r in trajectories]) for trajectories in envs.values()]
            for envs in self.levels.values()
        ]

    def balanced_array(self, metric: Metric):
        """The metric as a ``(seeds, envs, trajectories)`` array, or ``None`` when group sizes differ."""
        return _stack(self.nested_values(metric))


class VarianceComponents(NamedTuple):
    """Variance contributed by each level of nested results, clipped at zero."""

    seed: float
    env: float
    trajectory: float


class _Levels:
    """A nested metric split into seed, environment and trajectory deviations with their sums of squares."""

    def __init__(self, nested: List[List[np.ndarray]]) -> None:
        self.nested = nested
        self.n_seeds = len(nested)
        self.n_envs = sum(len(envs) for envs in nested)
        self.n = sum(values.size for envs in nested for values in envs)
        self.grand = float(np.concatenate([values for envs in nested for values in envs]).mean())
        self.seed_means = [float(np.concatenate(envs).mean()) for envs in nested]
        self.env_means = [[float(values.mean()) for values in envs] for envs in nested]
        self.ss_seed = sum((s - self.grand) ** 2 for s in self.seed_means)
        self.ss_env = sum((e - s) ** 2 for means, s in zip(self.env_means, self.seed_means) for e in means)
        self.ss_traj = sum(
            float(((values - e) ** 2).sum())
            for envs, means in zip(nested, self.env_means)
            for values, e in zip(envs, means)
        )

    def components(self) -> VarianceComponents:
        # Mean-square estimators; unbalanced groups use the average group sizes.
        m, g, n = self.n_seeds, self.n_envs, self.n
        traj = self.ss_traj / (n - g) if n > g else 0.0
        env = self.ss_env / (g - m) - traj * g / n if g > m else 0.0
        seed = self.ss_seed / (m - 1) - env * m / g - traj * m / n if m > 1 else 0.0
        return VarianceComponents(max(seed, 0.0), max(env, 0.0), traj)

    def rescaled(self) -> List[List[np.ndarray]]:
        """The values rebuilt with each level's deviations scaled so that their spread equals its component."""
        components = self.components()
        a = _scale(components.seed, self.ss_seed / self.n_seeds)
        b = _scale(components.env, self.ss_env / self.n_envs)
        c = _scale(components.trajectory, self.ss_traj / self.n)
        return [
            [self.grand + a * (s - self.grand) + b * (e - s) + c * (values - e) for values, e in zip(envs, means)]
            for envs, means, s in zip(self.nested, self.env_means, self.seed_means)
        ]


def _scale(component: float, spread: float) -> float:
    return float(np.sqrt(component / spread)) if spread > 0.0 else 0.0


def _stack(nested: List[List[np.ndarray]]) -> Optional[np.ndarray]:
    env_counts = {len(envs) for envs in nested}
    traj_counts = {len(values) for envs in nested for values in envs}
    if len(env_counts) != 1 or len(traj_counts) != 1:
        return None
    return np.array([[values for values in envs] for envs in nested])


def variance_components(data: NestedResults, metric: Metric) -> VarianceComponents:
    """
    Nested-ANOVA estimates of the seed, environment and trajectory variances of ``metric``.

    On balanced data each estimate is unbiased before clipping at zero.
    """
    return _Levels(data.nested_values(metric)).components()


def bootstrap_replicates(data: NestedResults, metric: Metric, reps: int, rng: RandomSource) -> np.ndarray:
    """
    Grand means of ``reps`` hierarchical resamples: seeds, then environments, then trajectories.

    Each level's deviations are first rescaled to that level's variance component, so the replicate variance
    estimates the random-effects variance of the grand mean, ``s2_seed / m + s2_env / (m K) + s2_traj / (m K N)``
    on balanced data.
    """
    nested = _Levels(data.nested_values(metric)).rescaled()
    balanced = _stack(nested)
    if balanced is not None:
        return _balanced_replicates(balanced, reps, rng)

    out = np.empty(reps)
    for r in range(reps):
        sampled = []
        for s in rng.integers(len(nested), size=len(nested)):
            envs = nested[s]
            for e in rng.integers(len(envs), size=len(envs)):
                values = envs[e]
                sampled.append(values[rng.integers(values.size, size=values.size)])
        out[r] = np.concatenate(sampled).mean()
    return out


def _balanced_replicates(values: np.ndarray, reps: int, rng: RandomSource) -> np.ndarray:
    m, K, N = values.shape
    chunk = max(1, _CHUNK_ELEMENTS // values.size)
    out = np.empty(reps)
    for start in range(0, reps, chunk):
        n = min(chunk, reps - start)
        seeds = rng.integers(m, size=(n, m))
        envs = rng.integers(K, size=(n, m, K))
        trajectories = rng.integers(N, size=(n, m, K, N))
        sampled = values[seeds[:, :, None, None], envs[:, :, :, None], trajectories]
        out[start : start + n] = sampled.reshape(n, -1).mean(axis=1)
    return out


def _percentile_interval(point: float, replicates: np.ndarray, confidence: float) -> BootstrapResult:
    alpha = (1.0 - confidence) / 2.0
    low, high = np.quantile(replicates, [alpha, 1.0 - alpha])
    return BootstrapResult(float(point), float(low), float(high))


def hierarchical_bootstrap(
    data: NestedResults,
    metric: Metric,
    reps: int = DEFAULT_BOOTSTRAP_REPS,
    rng: Optional[RandomSource] = None,
    confidence: float = CONFIDENCE_LEVEL,
) -> BootstrapResult:
    """
    Mean of ``metric`` over all trajectories with a hierarchical-bootstrap percentile interval.

    Parameters
    ----------
    data : NestedResults
        Trajectory records grouped by seed and environment.
    metric : str or callable
        ``"correct"``, ``"tau"``, a key of the records' ``extra`` dict, or a function of a record.
    reps : int
        Number of bootstrap replicates, at least 100.
    rng : RandomSource
        Resampling stream.
    confidence : float
        Coverage of the percentile interval.

    Returns
    -------
    BootstrapResult
        Point estimate and interval bounds.
    """
    if reps < _MIN_REPS:
        raise ValueError(f"Use at least {_MIN_REPS} bootstrap replicates, got {reps}")
    rng = rng or RandomSource(0)
    point = float(np.mean([r.metric(metric) for r in data.records()]))
    return _percentile_interval(point, bootstrap_replicates(data, metric, reps, rng), confidence)


def flat_bootstrap(
    data: NestedResults,
    metric: Metric,
    reps: int = DEFAULT_BOOTSTRAP_REPS,
    rng: Optional[RandomSource] = None,
    confidence: float = CONFIDENCE_LEVEL,
) -> BootstrapResult:
    """Naive bootstrap that resamples trajectories and ignores the nesting."""
    if reps < _MIN_REPS:
        raise ValueError(f"Use at least {_MIN_REPS} bootstrap replicates, got {reps}")
    rng = rng or RandomSource(0)
    values = np.array([r.metric(metric) for r in data.records()])
    replicates = values[rng.integers(values.size, size=(reps, values.size))].mean(axis=1)
    return _percentile_interval(float(values.mean()), replicates, confidence)


def survival_curve(taus: Sequence[int], t_grid: Sequence[int]) -> np.ndarray:
    """Empirical ``P(tau > t)`` at each grid point."""
    taus = np.asarray(taus)
    if taus.size == 0:
        raise ValueError("survival_curve needs at least one stopping time")
    t_grid = np.asarray(t_grid)
    return (taus[None, :] > t_grid[:, None]).mean(axis=1)


def summarize(
    data: NestedResults,
    reps: int = DEFAULT_BOOTSTRAP_REPS,
    rng: Optional[RandomSource] = None,
    confidence: float = CONFIDENCE_LEVEL,
) -> Dict[str, BootstrapResult]:
    """Hierarchical-bootstrap summaries of correctness, stopping time and every extra metric present."""
    rng = rng or RandomSource(0)
    metrics = ["correct", "tau"]
    extras = set.intersection(*(set(r.extra) for r in data.records()))
    metrics += sorted(extras)
    return {
        name: hierarchical_bootstrap(data, name, reps, rng.child(i), confidence) for i, name in enumerate(metrics)
    }
