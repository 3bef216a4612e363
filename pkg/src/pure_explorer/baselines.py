"""
Comparison algorithms: Track-and-Stop and its approximation, top-two sampling, information-directed and
posterior-greedy sampling on top of an inference model, explore-then-commit, and a few regret baselines.

All policies read the same :class:`~pure_explorer.core.History`, so a harness running them against the same
environment stream compares them under common random numbers.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional, Protocol, Sequence, Tuple

import numpy as np
from scipy.integrate import trapezoid
from scipy.special import entr, ndtri
from scipy.stats import norm

from pure_explorer.config import IIDS_GRID_SIZE, TIE_JITTER, TOP_TWO_BETA
from pure_explorer.core import Action, History, Hypothesis, Observation, Policy, RandomSource, append
from pure_explorer.utils.exceptions import DegenerateGapsError, HypothesisActionMismatch, UnpulledArmError

_BISECTION_STEPS = 200
_TTPS_GRID = 2_000
_IIDS_TAIL = 4.0

Predictive = Callable[[History, Action], Tuple[np.ndarray, np.ndarray]]


class InferenceModel(Protocol):
    """Anything that maps a history to a distribution over hypotheses."""

    def predict_proba(self, history: History) -> np.ndarray: ...


class ActionValueModel(Protocol):
    """Anything that maps a history to one value per action, the stop action last."""

    def q_values(self, history: History) -> np.ndarray: ...


@dataclass(frozen=True)
class ArmStats:
    """Per-arm reveal counts and reward sums; ``t`` is the number of queries made so far."""

    counts: np.ndarray
    sums: np.ndarray
    t: int

    @classmethod
    def from_history(cls, history: History, n_arms: Optional[int] = None) -> ArmStats:
        K = n_arms or history.n_arms
        counts = np.zeros(K)
        sums = np.zeros(K)
        for a, x in history.steps:
            if x.dim == 1:
                counts[a] += 1
                sums[a] += x.value
            else:
                mask = x.mask_array()[:K]
                counts[mask] += 1
                sums[mask] += x.as_array()[:K][mask]
        return cls(counts=counts, sums=sums, t=len(history.steps))

    @property
    def K(self) -> int:
        return self.counts.size

    @property
    def means(self) -> np.ndarray:
        """Empirical means, NaN for arms never revealed."""
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.counts > 0, self.sums / np.maximum(self.counts, 1), np.nan)

    def unpulled(self) -> np.ndarray:
        return np.flatnonzero(self.counts == 0)


def _jittered(mu: np.ndarray) -> np.ndarray:
    return np.asarray(mu, dtype=float) - TIE_JITTER * np.arange(len(mu))


def _empirical_best(mu: np.ndarray) -> int:
    return int(np.argmax(_jittered(np.nan_to_num(mu, nan=-np.inf))))


# ----------------------------------------------------------------------------------------------------------------
# Track-and-Stop
# ----------------------------------------------------------------------------------------------------------------


def tas_allocation(mu_hat: Sequence[float], sigma: float) -> np.ndarray:
    """
    Optimal sampling proportions of Gaussian best-arm identification.

    With ``x_a = w_a / w_best``, the optimality conditions reduce to ``sum_a x_a(y)^2 = 1`` where
    ``x_a(y) = (y / d_a) / (1 - y / d_a)`` and ``d_a = gap_a^2 / (2 sigma^2)``; ``y`` is found by bisection.

    Raises
    ------
    DegenerateGapsError
        If all means are equal.
    """
    mu = np.asarray(mu_hat, dtype=float)
    if mu.size < 2:
        raise ValueError("Track-and-Stop needs at least two arms")
    if np.ptp(mu) == 0.0:
        raise DegenerateGapsError()
    mu = _jittered(mu)
    best = int(np.argmax(mu))
    others = np.delete(np.arange(mu.size), best)
    d = (mu[best] - mu[others]) ** 2 / (2.0 * sigma**2)

    def responses(y: float) -> np.ndarray:
        ratio = y / d
        return ratio / (1.0 - ratio)

    lo, hi = 0.0, float(d.min())
    for _ in range(_BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        if np.sum(responses(mid) ** 2) < 1.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-16 * max(hi, 1e-300):
            break
    x = responses(0.5 * (lo + hi))
    weights = np.empty(mu.size)
    weights[best] = 1.0 / (1.0 + x.sum())
    weights[others] = x * weights[best]
    return weights


def d_tracking_select(stats: ArmStats, target: np.ndarray) -> Action:
    """Forced exploration of arms below ``sqrt(t) - K/2``, otherwise the arm lagging most behind ``t * target``."""
    lagging = np.flatnonzero(stats.counts <= np.sqrt(stats.t) - stats.K / 2.0)
    if lagging.size:
        return int(lagging[0])
    return int(np.argmin(stats.counts - stats.t * np.asarray(target)))


def glrt_threshold(t: int, delta: float) -> float:
    return float(np.log((1.0 + np.log(max(t, 1))) / delta))


def glrt_statistic(stats: ArmStats, sigma: float) -> float:
    """Generalized likelihood ratio between the empirical best arm and its closest challenger."""
    missing = stats.unpulled()
    if missing.size:
        raise UnpulledArmError(missing.tolist())
    mu = stats.means
    best = _empirical_best(mu)
    others = np.delete(np.arange(stats.K), best)
    n_best, n = stats.counts[best], stats.counts[others]
    gaps = mu[best] - mu[others]
    return float(np.min(n_best * n / (n_best + n) * gaps**2 / (2.0 * sigma**2)))


def glrt_stop(stats: ArmStats, sigma: float, delta: float) -> Tuple[bool, float, float]:
    """Chernoff stopping rule; returns the decision with the statistic and threshold for logging."""
    statistic = glrt_statistic(stats, sigma)
    threshold = glrt_threshold(stats.t, delta)
    return statistic >= threshold, statistic, threshold


def approx_tas_weights(mu_hat: Sequence[float], linear: bool = False) -> np.ndarray:
    """
    Gap-based surrogate of the Track-and-Stop proportions.

    The best arm's gap is replaced by the smallest gap of the others; weights are proportional to ``1 / gap^2``,
    or ``1 / gap`` with ``linear=True``.
    """
    mu = np.asarray(mu_hat, dtype=float)
    best = _empirical_best(mu)
    gaps = mu[best] - mu
    others = np.delete(gaps, best)
    surrogate = others.min()
    if surrogate <= 0.0:
        raise DegenerateGapsError()
    gaps[best] = surrogate
    raw = 1.0 / gaps if linear else 1.0 / gaps**2
    return raw / raw.sum()


def allocation_tv_trace(history: History, sigma: float, linear: bool = False) -> np.ndarray:
    """
    Total-variation distance between the approximate and the full Track-and-Stop allocation after each query.

    Steps where some arm is still unrevealed, or the empirical means are tied, are reported as NaN.
    """
    trace = np.full(len(history.steps), np.nan)
    for s in range(1, len(history.steps) + 1):
        stats = ArmStats.from_history(history.prefix(s + 1))
        if stats.unpulled().size:
            continue
        try:
            full = tas_allocation(stats.means, sigma)
            approx = approx_tas_weights(stats.means, linear)
        except DegenerateGapsError:
            continue
        trace[s - 1] = 0.5 * np.abs(full - approx).sum()
    return trace


class _GaussianBAIPolicy(Policy):
    """Shared skeleton: sample every arm once, then stop with the GLRT (when ``delta`` is set) or allocate."""

    def __init__(self, sigma: float, delta: Optional[float] = None) -> None:
        self.sigma = sigma
        self.delta = delta

    def act(self, history: History, rng: RandomSource) -> Action:
        stats = ArmStats.from_history(history)
        missing = stats.unpulled()
        if missing.size:
            return int(missing[0])
        if self.delta is not None and glrt_stop(stats, self.sigma, self.delta)[0]:
            return history.stop_action
        return self.allocate(stats, rng)

    def allocate(self, stats: ArmStats, rng: RandomSource) -> Action:
        raise NotImplementedError

    def recommend(self, history: History) -> Hypothesis:
        return _empirical_best(ArmStats.from_history(history).means)


class TrackAndStopPolicy(_GaussianBAIPolicy):
    """D-tracking of the optimal proportions with the GLRT stopping rule."""

    def allocate(self, stats: ArmStats, rng: RandomSource) -> Action:
        try:
            target = tas_allocation(stats.means, self.sigma)
        except DegenerateGapsError:
            target = np.full(stats.K, 1.0 / stats.K)
        return d_tracking_select(stats, target)


class ApproxTrackAndStopPolicy(_GaussianBAIPolicy):
    """Track-and-Stop with the gap-based surrogate allocation."""

    def __init__(self, sigma: float, delta: Optional[float] = None, linear: bool = False) -> None:
        super().__init__(sigma, delta)
        self.linear = linear

    def allocate(self, stats: ArmStats, rng: RandomSource) -> Action:
        try:
            target = approx_tas_weights(stats.means, self.linear)
        except DegenerateGapsError:
            target = np.full(stats.K, 1.0 / stats.K)
        return d_tracking_select(stats, target)


# ----------------------------------------------------------------------------------------------------------------
# Top-two and uniform sampling
# ----------------------------------------------------------------------------------------------------------------


def best_arm_probabilities(stats: ArmStats, sigma: float) -> np.ndarray:
    """Plug-in Gaussian posterior probability that each arm is the best, by quadrature on a fine grid."""
    mu = stats.means
    scale = sigma / np.sqrt(np.maximum(stats.counts, 1))
    grid = np.linspace((mu - 6.0 * scale).min(), (mu + 6.0 * scale).max(), _TTPS_GRID)
    pdf = norm.pdf(grid[None, :], loc=mu[:, None], scale=scale[:, None])
    log_cdf = norm.logcdf(grid[None, :], loc=mu[:, None], scale=scale[:, None])
    others = log_cdf.sum(axis=0, keepdims=True) - log_cdf
    mass = trapezoid(pdf * np.exp(others), grid, axis=1)
    total = mass.sum()
    if not total > 0.0:
        mass = np.zeros(stats.K)
        mass[_empirical_best(mu)] = 1.0
        return mass
    return mass / total


def ttps_select(stats: ArmStats, rng: RandomSource, sigma: float = 1.0, beta: float = TOP_TWO_BETA) -> Action:
    """Leader (highest posterior mass) with probability ``beta``, otherwise the runner-up."""
    probs = _jittered(best_arm_probabilities(stats, sigma))
    order = np.argsort(-probs, kind="stable")
    leader, challenger = int(order[0]), int(order[1])
    return leader if rng.random() < beta else challenger


def uniform_select(K: int, rng: RandomSource) -> Action:
    return int(rng.integers(K))


class TopTwoPolicy(_GaussianBAIPolicy):
    def __init__(self, sigma: float, delta: Optional[float] = None, beta: float = TOP_TWO_BETA) -> None:
        super().__init__(sigma, delta)
        self.beta = beta

    def allocate(self, stats: ArmStats, rng: RandomSource) -> Action:
        return ttps_select(stats, rng, self.sigma, self.beta)


class UniformPolicy(_GaussianBAIPolicy):
    """Equiprobable sampling; with ``delta`` set it stops through the GLRT once every arm was seen."""

    def __init__(self, sigma: float = 1.0, delta: Optional[float] = None) -> None:
        super().__init__(sigma, delta)

    def act(self, history: History, rng: RandomSource) -> Action:
        if self.delta is not None:
            stats = ArmStats.from_history(history)
            if not stats.unpulled().size and glrt_stop(stats, self.sigma, self.delta)[0]:
                return history.stop_action
        return uniform_select(history.n_arms, rng)


# ----------------------------------------------------------------------------------------------------------------
# Inference-model based rules
# ----------------------------------------------------------------------------------------------------------------


def _entropy(probs: np.ndarray) -> float:
    return float(entr(np.clip(probs, 0.0, 1.0)).sum())


def gaussian_plugin_predictive(sigma: float, grid_size: int = IIDS_GRID_SIZE) -> Predictive:
    """
    Reward candidates for each arm: ``grid_size`` equally weighted quantiles of ``N(mu_hat_a, sigma^2)`` spanning
    four standard deviations on either side. Unrevealed arms use the mean of the revealed ones.
    """
    if grid_size < 2:
        raise ValueError("The reward grid needs at least two points")
    tail = norm.cdf(-_IIDS_TAIL)
    quantiles = ndtri(np.linspace(tail, 1.0 - tail, grid_size))
    weights = np.full(grid_size, 1.0 / grid_size)

    def predictive(history: History, a: Action) -> Tuple[np.ndarray, np.ndarray]:
        mu = ArmStats.from_history(history).means
        centre = mu[a]
        if np.isnan(centre):
            centre = float(np.nanmean(mu)) if np.isfinite(mu).any() else 0.0
        return centre + sigma * quantiles, weights

    return predictive


def _candidate_observation(history: History, a: Action, value: float) -> Observation:
    dim = history.initial.dim
    if dim == 1:
        return Observation.scalar(value)
    values = np.zeros(dim)
    mask = np.zeros(dim, dtype=bool)
    values[a], mask[a] = value, True
    return Observation.from_arrays(values, mask)


def iids_gains(infer: InferenceModel, history: History, predictive: Predictive) -> np.ndarray:
    """Estimated entropy reduction of the hypothesis posterior for each query."""
    current = _entropy(infer.predict_proba(history))
    gains = np.zeros(history.n_arms)
    for a in range(history.n_arms):
        values, weights = predictive(history, a)
        expected = 0.0
        for value, weight in zip(values, weights):
            if weight <= 0.0:
                continue
            child = append(_uncapped(history), a, _candidate_observation(history, a, value))
            expected += weight * _entropy(infer.predict_proba(child))
        gains[a] = current - expected
    return gains


def _uncapped(history: History) -> History:
    """Copy of ``history`` without a horizon cap, for one-step look-ahead."""
    return replace(history, n_max=None)


def iids_select(
    infer: InferenceModel,
    history: History,
    reward_grid_size: int = IIDS_GRID_SIZE,
    rng: Optional[RandomSource] = None,
    sigma: float = 1.0,
    predictive: Optional[Predictive] = None,
) -> Action:
    """Query with the largest estimated information gain; lowest index on ties."""
    predictive = predictive or gaussian_plugin_predictive(sigma, reward_grid_size)
    gains = iids_gains(infer, history, predictive)
    return int(np.argmax(np.round(gains, 12)))


def idpt_act(infer: InferenceModel, history: History, delta: Optional[float]) -> Action:
    """
    Pull the currently most likely best arm, or stop once its posterior reaches ``1 - delta``.

    Raises
    ------
    HypothesisActionMismatch
        If hypotheses are not arms.
    """
    probs = infer.predict_proba(history)
    if probs.size != history.n_arms:
        raise HypothesisActionMismatch(probs.size, history.n_arms)
    best = int(np.argmax(probs))
    if delta is not None and probs[best] >= 1.0 - delta:
        return history.stop_action
    return best


def etc_act(q: ActionValueModel, infer: InferenceModel, history: History, stopped: bool) -> Action:
    """Follow the greedy action of ``q`` until it asks to stop, then play the most likely best arm."""
    if not stopped:
        action = int(np.argmax(q.q_values(history)))
        if action != history.stop_action:
            return action
    return int(np.argmax(infer.predict_proba(history)))


class InformationDirectedPolicy(Policy):
    """Information-directed sampling on an inference model, stopping when ``max I >= 1 - delta``."""

    def __init__(
        self,
        infer: InferenceModel,
        sigma: float = 1.0,
        delta: Optional[float] = None,
        grid_size: int = IIDS_GRID_SIZE,
        predictive: Optional[Predictive] = None,
    ) -> None:
        self.infer = infer
        self.delta = delta
        self.predictive = predictive or gaussian_plugin_predictive(sigma, grid_size)

    def act(self, history: History, rng: RandomSource) -> Action:
        if self.delta is not None and self.infer.predict_proba(history).max() >= 1.0 - self.delta:
            return history.stop_action
        return int(np.argmax(np.round(iids_gains(self.infer, history, self.predictive), 12)))

    def recommend(self, history: History) -> Hypothesis:
        return int(np.argmax(self.infer.predict_proba(history)))


class PosteriorGreedyPolicy(Policy):
    def __init__(self, infer: InferenceModel, delta: Optional[float] = None) -> None:
        self.infer = infer
        self.delta = delta

    def act(self, history: History, rng: RandomSource) -> Action:
        return idpt_act(self.infer, history, self.delta)

    def recommend(self, history: History) -> Hypothesis:
        return int(np.argmax(self.infer.predict_proba(history)))


class ExploreThenCommitPolicy(Policy):
    """Explore with a stopping Q-model, then commit for the rest of the horizon to the arm it identified."""

    def __init__(self, q: ActionValueModel, infer: InferenceModel) -> None:
        self.q = q
        self.infer = infer
        self.committed: Optional[Action] = None

    def reset(self) -> None:
        self.committed = None

    def act(self, history: History, rng: RandomSource) -> Action:
        if self.committed is None:
            action = etc_act(self.q, self.infer, history, stopped=False)
            if int(np.argmax(self.q.q_values(history))) != history.stop_action:
                return action
            self.committed = action
        return self.committed

    def recommend(self, history: History) -> Hypothesis:
        return int(np.argmax(self.infer.predict_proba(history)))


# ----------------------------------------------------------------------------------------------------------------
# Regret baselines
# ----------------------------------------------------------------------------------------------------------------


class UCBPolicy(Policy):
    """Gaussian UCB1 index ``mu_hat + sigma * sqrt(2 ln t / N)``."""

    def __init__(self, sigma: float = 1.0) -> None:
        self.sigma = sigma

    def act(self, history: History, rng: RandomSource) -> Action:
        stats = ArmStats.from_history(history)
        missing = stats.unpulled()
        if missing.size:
            return int(missing[0])
        bonus = self.sigma * np.sqrt(2.0 * np.log(max(stats.t, 1)) / stats.counts)
        return int(np.argmax(_jittered(stats.means + bonus)))

    def recommend(self, history: History) -> Hypothesis:
        return _empirical_best(ArmStats.from_history(history).means)


class ThompsonPolicy(Policy):
    """Gaussian Thompson sampling with known noise and a flat prior."""

    def __init__(self, sigma: float = 1.0) -> None:
        self.sigma = sigma

    def act(self, history: History, rng: RandomSource) -> Action:
        stats = ArmStats.from_history(history)
        missing = stats.unpulled()
        if missing.size:
            return int(missing[0])
        samples = rng.normal(stats.means, self.sigma / np.sqrt(stats.counts))
        return int(np.argmax(samples))

    def recommend(self, history: History) -> Hypothesis:
        return _empirical_best(ArmStats.from_history(history).means)


def cumulative_regret(means: Sequence[float], actions: Sequence[Action]) -> np.ndarray:
    """Running sum of ``max(mu) - mu[a_t]`` over the played actions."""
    means = np.asarray(means, dtype=float)
    actions = np.asarray(actions, dtype=int)
    return np.cumsum(means.max() - means[actions])
