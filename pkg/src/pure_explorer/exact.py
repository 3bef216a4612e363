"""
Bayes-optimal reference solvers.

Backward induction runs over the tree of quantized histories of a finite prior. The fixed-budget solver maximises
the probability of a correct answer after exactly ``N`` queries; the fixed-confidence solver maximises
``lambda * r_tau - tau`` with a forced stop at ``N_max``, and :func:`dual_search` bisects ``lambda`` for the
smallest stop bonus meeting a correctness target.
"""

from __future__ import annotations

import hashlib
import logging
import math
import pickle
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, Iterator, Optional, Tuple

import numpy as np

from pure_explorer.config import (
    LAMBDA_BRACKET_FACTOR,
    LAMBDA_CEILING,
    LAMBDA_TOLERANCE,
    MAX_EXACT_NODES,
)
from pure_explorer.core import Action, History, Hypothesis, Policy, RandomSource
from pure_explorer.envs import PriorSpec
from pure_explorer.posterior import ObservationGrid, cell_likelihoods, support_arrays
from pure_explorer.utils.exceptions import InfeasibleAtHorizon, StateSpaceTooLarge

logger = logging.getLogger(__name__)

HistoryKey = Tuple[Tuple[int, int], ...]

_TIE_TOLERANCE = 1e-12


class TableKind(str, Enum):
    FIXED_BUDGET = "fixed_budget"
    FIXED_CONFIDENCE = "fixed_confidence"


@dataclass(frozen=True)
class TableEntry:
    """Value, action values and posterior summary of one history node."""

    value: float
    q: np.ndarray
    confidence: float
    hypothesis: Hypothesis


@dataclass
class ValueTable:
    """
    Solved history tree.

    Keys are sequences of ``(action, observation cell)`` pairs, sorted when ``collapsed``. In fixed-confidence
    tables ``q`` has ``n_arms + 1`` entries, the last being the stop action.
    """

    kind: TableKind
    horizon: int
    grid: ObservationGrid
    n_arms: int
    likelihoods: np.ndarray
    prior: np.ndarray
    hyp_of: np.ndarray
    n_hypotheses: int
    lam: Optional[float] = None
    collapsed: bool = False
    entries: Dict[HistoryKey, TableEntry] = field(default_factory=dict)
    value: float = float("nan")
    correctness: float = float("nan")
    expected_tau: float = float("nan")

    def canonical(self, key: HistoryKey) -> HistoryKey:
        return tuple(sorted(key)) if self.collapsed else tuple(key)

    def key_for(self, history: History) -> HistoryKey:
        return self.canonical(tuple((a, self.grid.cell_of(x.value)) for a, x in history.steps))

    def posterior_weights(self, key: HistoryKey) -> np.ndarray:
        """Normalised posterior over support models after the quantized evidence ``key``."""
        weights = self.prior.copy()
        for a, c in key:
            weights = weights * self.likelihoods[:, a, c]
        total = weights.sum()
        return weights / total if total > 0.0 else weights

    def hypothesis_probs(self, weights: np.ndarray) -> np.ndarray:
        return np.bincount(self.hyp_of, weights=weights, minlength=self.n_hypotheses)

    def greedy_action(self, key: HistoryKey) -> Action:
        return _greedy(self.entries[self.canonical(key)].q, self.kind)

    def __len__(self) -> int:
        return len(self.entries)


def _greedy(q: np.ndarray, kind: TableKind) -> Action:
    if kind == TableKind.FIXED_CONFIDENCE:
        stop = len(q) - 1
        # Stop wins ties.
        if q[stop] >= q[:stop].max() - _TIE_TOLERANCE:
            return stop
        return int(np.argmax(q[:stop]))
    return int(np.argmax(q))


class _BackwardInduction:
    def __init__(self, table: ValueTable) -> None:
        self.table = table
        self.L = table.likelihoods

    def solve(self, key: HistoryKey, weights: np.ndarray) -> float:
        table = self.table
        canon = table.canonical(key)
        cached = table.entries.get(canon)
        if cached is not None:
            return cached.value

        hyp_probs = table.hypothesis_probs(weights)
        hypothesis = int(np.argmax(hyp_probs))
        confidence = float(hyp_probs[hypothesis])
        depth = len(key)
        K = table.n_arms

        if table.kind == TableKind.FIXED_BUDGET:
            if depth >= table.horizon:
                q = np.full(K, confidence)
            else:
                q = np.array([self._expected_child_value(key, weights, a) for a in range(K)])
        else:
            q = np.full(K + 1, -math.inf)
            q[K] = table.lam * confidence
            if depth + 1 < table.horizon:
                for a in range(K):
                    q[a] = -1.0 + self._expected_child_value(key, weights, a)

        value = float(q.max())
        table.entries[canon] = TableEntry(value=value, q=q, confidence=confidence, hypothesis=hypothesis)
        return value

    def _expected_child_value(self, key: HistoryKey, weights: np.ndarray, a: Action) -> float:
        joint = weights[:, None] * self.L[:, a, :]
        predictive = joint.sum(axis=0)
        total = 0.0
        for c in np.flatnonzero(predictive > 0.0):
            child = joint[:, c] / predictive[c]
            total += predictive[c] * self.solve(key + ((a, int(c)),), child)
        return total


def _check_node_guard(n_arms: int, n_cells: int, depth: int, limit: int) -> None:
    branching = float(n_arms * n_cells)
    nodes = sum(branching**d for d in range(depth + 1))
    if nodes > limit:
        raise StateSpaceTooLarge(nodes, limit)


def _new_table(
    spec: PriorSpec,
    kind: TableKind,
    horizon: int,
    grid: ObservationGrid,
    lam: Optional[float],
    collapse: bool,
) -> ValueTable:
    arrays = support_arrays(spec)
    prior = np.exp(arrays.log_prior)
    return ValueTable(
        kind=kind,
        horizon=horizon,
        grid=grid,
        n_arms=spec.n_arms,
        likelihoods=cell_likelihoods(spec, grid),
        prior=prior / prior.sum(),
        hyp_of=arrays.hyp_of,
        n_hypotheses=arrays.n_hypotheses,
        lam=lam,
        collapsed=collapse,
    )


def solve_fixed_budget(
    spec: PriorSpec,
    N: int,
    obs_grid: Optional[ObservationGrid] = None,
    collapse: bool = False,
    node_limit: int = MAX_EXACT_NODES,
    cache_dir: Optional[Path] = None,
) -> Tuple[ValueTable, float]:
    """
    Optimal fixed-budget policy by backward induction.

    Parameters
    ----------
    spec : PriorSpec
        Finite prior of a history-independent scalar family.
    N : int
        Number of queries; ``N = 0`` answers from the prior alone.
    obs_grid : ObservationGrid, optional
        Observation quantization; defaults to :meth:`ObservationGrid.for_prior`.
    collapse : bool
        Key histories on per-arm multisets of cells instead of ordered sequences.
    node_limit : int
        Guard on the size of the history tree.
    cache_dir : Path, optional
        Directory of pickled tables to reuse.

    Returns
    -------
    Tuple[ValueTable, float]
        The solved table and the optimal probability of a correct answer.

    Raises
    ------
    StateSpaceTooLarge
        If the history tree may exceed ``node_limit`` nodes.
    """
    grid = obs_grid or ObservationGrid.for_prior(spec)
    cache_path = _cache_path(cache_dir, spec, TableKind.FIXED_BUDGET, N, None, grid, collapse)
    if cache_path is not None and cache_path.exists():
        table = load_table(cache_path)
        return table, table.value

    _check_node_guard(spec.n_arms, grid.n_cells, N, node_limit)
    table = _new_table(spec, TableKind.FIXED_BUDGET, N, grid, None, collapse)
    table.value = _BackwardInduction(table).solve((), table.prior)
    table.correctness, table.expected_tau = table.value, float(N)
    logger.info("Fixed-budget table solved: N=%d, %d nodes, value %.6f", N, len(table), table.value)

    if cache_path is not None:
        save_table(table, cache_path)
    return table, table.value


def solve_fixed_confidence(
    spec: PriorSpec,
    lam: float,
    N_max: int,
    delta: Optional[float] = None,
    obs_grid: Optional[ObservationGrid] = None,
    collapse: bool = False,
    node_limit: int = MAX_EXACT_NODES,
    cache_dir: Optional[Path] = None,
) -> Tuple[ValueTable, float, float, float]:
    """
    Optimal policy for the reward ``lam * r_tau - tau`` with stopping forced at history length ``N_max``.

    ``delta`` is informational here; the correctness target is enforced by :func:`dual_search`.

    Returns
    -------
    Tuple[ValueTable, float, float, float]
        The table, the optimal value, the exact correctness of the greedy policy and its expected number of
        queries.
    """
    if lam < 0.0:
        raise ValueError(f"lambda must be non-negative, got {lam}")
    if N_max < 1:
        raise ValueError(f"N_max must be >= 1, got {N_max}")
    grid = obs_grid or ObservationGrid.for_prior(spec)
    cache_path = _cache_path(cache_dir, spec, TableKind.FIXED_CONFIDENCE, N_max, lam, grid, collapse)
    if cache_path is not None and cache_path.exists():
        table = load_table(cache_path)
        return table, table.value, table.correctness, table.expected_tau

    _check_node_guard(spec.n_arms, grid.n_cells, N_max - 1, node_limit)
    table = _new_table(spec, TableKind.FIXED_CONFIDENCE, N_max, grid, lam, collapse)
    table.value = _BackwardInduction(table).solve((), table.prior)
    table.correctness, table.expected_tau = evaluate_table(table)
    logger.debug(
        "Fixed-confidence table solved: lambda=%.4f, %d nodes, correctness %.6f, E[tau] %.4f",
        lam,
        len(table),
        table.correctness,
        table.expected_tau,
    )

    if cache_path is not None:
        save_table(table, cache_path)
    return table, table.value, table.correctness, table.expected_tau


def evaluate_table(table: ValueTable) -> Tuple[float, float]:
    """
    Exact correctness and expected number of queries of the table's greedy policy.

    Probability mass is pushed forward from the root along the greedy actions; the correctness contributed by a
    stopped node is its posterior confidence.
    """
    correctness, expected_tau = 0.0, 0.0
    stack = [((), table.prior, 1.0)]
    L = table.likelihoods
    while stack:
        key, weights, mass = stack.pop()
        entry = table.entries[table.canonical(key)]
        depth = len(key)
        terminal_budget = table.kind == TableKind.FIXED_BUDGET and depth >= table.horizon
        action = None if terminal_budget else _greedy(entry.q, table.kind)
        if action is None or action == table.n_arms:
            correctness += mass * entry.confidence
            expected_tau += mass * depth
            continue
        joint = weights[:, None] * L[:, action, :]
        predictive = joint.sum(axis=0)
        for c in np.flatnonzero(predictive > 0.0):
            stack.append((key + ((action, int(c)),), joint[:, c] / predictive[c], mass * predictive[c]))
    return correctness, expected_tau


def bellman_residual(table: ValueTable) -> float:
    """Largest gap between a stored action value and the one recomputed from its children."""
    worst = 0.0
    L = table.likelihoods
    for key, entry in table.entries.items():
        weights = table.posterior_weights(key)
        depth = len(key)
        queries = table.n_arms
        for a in range(queries):
            if not np.isfinite(entry.q[a]):
                continue
            if table.kind == TableKind.FIXED_BUDGET and depth >= table.horizon:
                continue
            joint = weights[:, None] * L[:, a, :]
            predictive = joint.sum(axis=0)
            expected = sum(
                predictive[c] * table.entries[table.canonical(key + ((a, int(c)),))].value
                for c in np.flatnonzero(predictive > 0.0)
            )
            recomputed = expected - 1.0 if table.kind == TableKind.FIXED_CONFIDENCE else expected
            worst = max(worst, abs(recomputed - entry.q[a]))
        worst = max(worst, abs(entry.value - float(entry.q.max())))
    return worst


def dual_search(
    spec: PriorSpec,
    delta: float,
    N_max: int,
    obs_grid: Optional[ObservationGrid] = None,
    collapse: bool = False,
    tolerance: float = LAMBDA_TOLERANCE,
    node_limit: int = MAX_EXACT_NODES,
    cache_dir: Optional[Path] = None,
) -> Tuple[float, ValueTable]:
    """
    Smallest stop bonus whose optimal policy is ``(1 - delta)``-correct.

    Correctness is non-decreasing in ``lambda``, so the search brackets from ``4 * N_max`` upwards by doubling
    and then bisects down to ``tolerance``.

    Raises
    ------
    InfeasibleAtHorizon
        If even ``lambda = 1e6`` misses the target within ``N_max``.
    """
    target = 1.0 - delta
    grid = obs_grid or ObservationGrid.for_prior(spec)

    def solve(lam: float) -> ValueTable:
        table, *_ = solve_fixed_confidence(
            spec, lam, N_max, delta, grid, collapse=collapse, node_limit=node_limit, cache_dir=cache_dir
        )
        return table

    prior_table = solve(0.0)
    if prior_table.correctness >= target - _TIE_TOLERANCE:
        return 0.0, prior_table

    hi = LAMBDA_BRACKET_FACTOR * N_max
    best = solve(hi)
    while best.correctness < target - _TIE_TOLERANCE:
        if hi >= LAMBDA_CEILING:
            raise InfeasibleAtHorizon(best.correctness, target, N_max)
        hi = min(2.0 * hi, LAMBDA_CEILING)
        best = solve(hi)

    lo = 0.0
    while hi - lo > tolerance:
        mid = 0.5 * (lo + hi)
        table = solve(mid)
        if table.correctness >= target - _TIE_TOLERANCE:
            hi, best = mid, table
        else:
            lo = mid
    logger.info("Dual search: lambda*=%.4f, correctness %.6f, E[tau] %.4f", hi, best.correctness, best.expected_tau)
    return hi, best


class TablePolicy(Policy):
    """Greedy policy read off a solved table; stops (or queries arm 0) on histories the table never reached."""

    def __init__(self, table: ValueTable) -> None:
        self.table = table

    def act(self, history: History, rng: RandomSource) -> Action:
        key = self.table.key_for(history)
        if self.table.canonical(key) not in self.table.entries:
            logger.debug("History %s is outside the solved table", key)
            return self.table.n_arms if self.table.kind == TableKind.FIXED_CONFIDENCE else 0
        return self.table.greedy_action(key)

    def recommend(self, history: History) -> Hypothesis:
        key = self.table.key_for(history)
        entry = self.table.entries.get(self.table.canonical(key))
        if entry is not None:
            return entry.hypothesis
        return int(np.argmax(self.table.hypothesis_probs(self.table.posterior_weights(key))))


def iter_entries(table: ValueTable) -> Iterator[Tuple[HistoryKey, TableEntry]]:
    yield from sorted(table.entries.items(), key=lambda item: (len(item[0]), item[0]))


# ----------------------------------------------------------------------------------------------------------------
# Cache
# ----------------------------------------------------------------------------------------------------------------


def table_cache_key(
    spec: PriorSpec,
    kind: TableKind,
    horizon: int,
    lam: Optional[float],
    grid: ObservationGrid,
    collapse: bool,
) -> str:
    digest = hashlib.sha256()
    digest.update(spec.spec_hash().encode())
    digest.update(f"{kind.value}|{horizon}|{lam!r}|{collapse}".encode())
    cells = grid.edges if grid.is_intervals else grid.points
    digest.update(("intervals" if grid.is_intervals else "points").encode())
    digest.update(np.ascontiguousarray(cells, dtype=float).tobytes())
    return digest.hexdigest()


def _cache_path(
    cache_dir: Optional[Path],
    spec: PriorSpec,
    kind: TableKind,
    horizon: int,
    lam: Optional[float],
    grid: ObservationGrid,
    collapse: bool,
) -> Optional[Path]:
    if cache_dir is None:
        return None
    return Path(cache_dir) / f"{table_cache_key(spec, kind, horizon, lam, grid, collapse)}.pkl"


def save_table(table: ValueTable, path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as f:
        pickle.dump(table, f, protocol=pickle.HIGHEST_PROTOCOL)


def load_table(path: Path) -> ValueTable:
    with Path(path).open("rb") as f:
        return pickle.load(f)
