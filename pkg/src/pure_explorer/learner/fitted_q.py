"""
Linear fitted-Q iteration for fixed budgets on finite priors.

Stage ``t`` holds a linear function ``Q_t(z, a) = phi(z, a) . w_t`` over quantized histories ``z`` of length
``t``. Each epoch sweeps the stages backwards: it draws ``(z, a)`` from a sampling distribution, draws the next
observation cell from the exact posterior predictive and regresses ``Q_t`` onto the next stage's greedy value, or
onto the posterior confidence ``r_N`` once the budget is spent. Stage functions are truncated to ``[0, 1]``.
"""

from __future__ import annotations

import itertools
import logging
import warnings
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional

import numpy as np

from pure_explorer.core import Action, RandomSource
from pure_explorer.envs import PriorSpec
from pure_explorer.exact import HistoryKey, solve_fixed_budget
from pure_explorer.posterior import ObservationGrid, cell_likelihoods, support_arrays
from pure_explorer.utils.exceptions import SingularRegression

logger = logging.getLogger(__name__)

FeatureMap = Callable[[HistoryKey, Action], np.ndarray]
Sampler = Callable[[int, RandomSource], HistoryKey]

_RIDGE = 1e-8


class QuantizedPrior:
    """Exact posterior arithmetic over quantized histories of a finite prior."""

    def __init__(self, spec: PriorSpec, grid: ObservationGrid) -> None:
        arrays = support_arrays(spec)
        prior = np.exp(arrays.log_prior)
        self.prior = prior / prior.sum()
        self.L = cell_likelihoods(spec, grid)
        self.hyp_of = arrays.hyp_of
        self.n_hypotheses = arrays.n_hypotheses
        self.n_arms = spec.n_arms
        self.n_cells = grid.n_cells

    def weights(self, key: HistoryKey) -> np.ndarray:
        w = self.prior.copy()
        for a, c in key:
            w = w * self.L[:, a, c]
        return w / w.sum()

    def predictive(self, weights: np.ndarray, a: Action) -> np.ndarray:
        return weights @ self.L[:, a, :]

    def reward(self, key: HistoryKey) -> float:
        """Posterior probability of the most likely hypothesis after ``key``."""
        return float(np.bincount(self.hyp_of, weights=self.weights(key), minlength=self.n_hypotheses).max())

    def draw_cell(self, key: HistoryKey, a: Action, rng: RandomSource) -> int:
        probs = self.predictive(self.weights(key), a)
        return int(rng.choice(self.n_cells, p=probs / probs.sum()))


def on_prior_sampler(model: QuantizedPrior) -> Sampler:
    """Histories built from uniformly random queries and observations drawn from the posterior predictive."""

    def sample(t: int, rng: RandomSource) -> HistoryKey:
        key: HistoryKey = ()
        for _ in range(t):
            a = int(rng.integers(model.n_arms))
            key = key + ((a, model.draw_cell(key, a, rng)),)
        return key

    return sample


def one_hot_features(n_arms: int, n_cells: int, horizon: int) -> FeatureMap:
    """Indicator of the ``(history, action)`` pair within its stage; recovers the tabular case."""
    index: Dict[tuple, int] = {}
    sizes: List[int] = []
    for t in range(horizon):
        pairs = list(itertools.product(range(n_arms), range(n_cells)))
        keys = list(itertools.product(pairs, repeat=t))
        for i, (key, a) in enumerate(itertools.product(keys, range(n_arms))):
            index[(tuple(key), a)] = i
        sizes.append(len(keys) * n_arms)

    def features(key: HistoryKey, a: Action) -> np.ndarray:
        vec = np.zeros(sizes[len(key)])
        vec[index[(tuple(key), a)]] = 1.0
        return vec

    return features


def constant_features(key: HistoryKey, a: Action) -> np.ndarray:
    return np.ones(1)


@dataclass
class FittedQ:
    """Per-stage linear action values, truncated to ``[0, 1]``."""

    horizon: int
    n_arms: int
    features: FeatureMap
    weights: List[Optional[np.ndarray]]

    def q(self, key: HistoryKey, a: Action) -> float:
        return float(np.clip(self.features(key, a) @ self.weights[len(key)], 0.0, 1.0))

    def q_values(self, key: HistoryKey) -> np.ndarray:
        return np.array([self.q(key, a) for a in range(self.n_arms)])

    def greedy(self, key: HistoryKey) -> Action:
        return int(np.argmax(self.q_values(key)))


def _least_squares(X: np.ndarray, y: np.ndarray) -> tuple:
    if np.linalg.matrix_rank(X) < X.shape[1]:
        gram = X.T @ X + _RIDGE * np.eye(X.shape[1])
        return np.linalg.solve(gram, X.T @ y), True
    return np.linalg.lstsq(X, y, rcond=None)[0], False


def fitted_q_linear(
    spec: PriorSpec,
    N: int,
    features: FeatureMap,
    epochs: int = 10,
    batch_size: int = 256,
    rng: Optional[RandomSource] = None,
    grid: Optional[ObservationGrid] = None,
    sampler: Optional[Sampler] = None,
) -> FittedQ:
    """
    Fit per-stage linear Q functions by backward regression.

    Parameters
    ----------
    spec : PriorSpec
        Finite prior of a scalar family; posterior rewards are computed exactly.
    N : int
        Query budget.
    features : callable
        ``features(key, a)`` for a quantized history ``key`` of length ``t < N``.
    epochs : int
        Backward sweeps over the stages.
    batch_size : int
        Regression samples per stage and epoch.
    rng : RandomSource, optional
        Sampling stream.
    grid : ObservationGrid, optional
        Observation quantization; defaults to :meth:`ObservationGrid.for_prior`.
    sampler : callable, optional
        ``sampler(t, rng)`` returning a history key of length ``t``; defaults to :func:`on_prior_sampler`.

    Returns
    -------
    FittedQ
        The stage functions.

    Warns
    -----
    SingularRegression
        When some design matrix was rank deficient and a ridge term of 1e-8 was added.
    """
    if N < 1:
        raise ValueError(f"Fitted Q needs N >= 1, got {N}")
    rng = rng or RandomSource(0)
    model = QuantizedPrior(spec, grid or ObservationGrid.for_prior(spec))
    sampler = sampler or on_prior_sampler(model)
    fitted = FittedQ(N, model.n_arms, features, [None] * N)
    singular = 0

    for epoch in range(epochs):
        for t in reversed(range(N)):
            r = rng.child(epoch, t)
            rows, targets = [], []
            for b in range(batch_size):
                rb = r.child(b)
                key = sampler(t, rb.child(0))
                a = int(rb.integers(model.n_arms))
                nxt = key + ((a, model.draw_cell(key, a, rb.child(1))),)
                target = model.reward(nxt) if t + 1 == N else fitted.q_values(nxt).max()
                rows.append(features(key, a))
                targets.append(target)
            fitted.weights[t], was_singular = _least_squares(np.array(rows), np.array(targets))
            singular += int(was_singular)
        logger.debug("Fitted-Q epoch %d done", epoch)

    if singular:
        warnings.warn(
            f"{singular} of {epochs * N} stage regressions were rank deficient; a ridge term of {_RIDGE} was added",
            SingularRegression,
        )
    return fitted


def evaluate_fitted(fitted: FittedQ, spec: PriorSpec, grid: Optional[ObservationGrid] = None) -> float:
    """Exact probability that the greedy policy of ``fitted`` identifies the true hypothesis."""
    model = QuantizedPrior(spec, grid or ObservationGrid.for_prior(spec))
    value = 0.0
    stack = [((), 1.0)]
    while stack:
        key, mass = stack.pop()
        if len(key) == fitted.horizon:
            value += mass * model.reward(key)
            continue
        a = fitted.greedy(key)
        predictive = model.predictive(model.weights(key), a)
        for c in np.flatnonzero(predictive > 0.0):
            stack.append((key + ((a, int(c)),), mass * predictive[c]))
    return value


def value_gap(fitted: FittedQ, spec: PriorSpec, grid: Optional[ObservationGrid] = None) -> float:
    """Optimal fixed-budget value minus the value of the fitted greedy policy."""
    _, optimal = solve_fixed_budget(spec, fitted.horizon, obs_grid=grid)
    return optimal - evaluate_fitted(fitted, spec, grid)
