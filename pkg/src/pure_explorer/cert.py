"""Certification of a trained policy's correctness: an anytime sequential test and a fixed-sample Hoeffding bound."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable, Optional, Tuple, Union

import numpy as np

from pure_explorer.utils.exceptions import InvalidSampleSizeError


def seq_boundary(
    t: Union[int, np.ndarray], B: int, delta_prime: float, eta: float
) -> Union[float, np.ndarray]:
    """
    Anytime boundary for the running mean of per-epoch batch accuracies.

    ``(1 - delta') + (1/t) * sqrt(2 (1 + v t) ln(sqrt(1 + v t) / eta))`` with ``v = (1 - delta') / B``; strictly
    decreasing in ``t`` towards ``1 - delta'``.

    Parameters
    ----------
    t : int or np.ndarray
        Epoch index (or indices), starting at 1.
    B : int
        Evaluation rollouts per epoch.
    delta_prime : float
        Certified error level.
    eta : float
        Probability that the test triggers although the policy is not ``(1 - delta')``-correct.
    """
    if not (0.0 < delta_prime < 1.0 and 0.0 < eta < 1.0):
        raise ValueError(f"delta' and eta must lie in (0, 1), got {delta_prime} and {eta}")
    if B < 1:
        raise InvalidSampleSizeError(B)
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 1):
        raise ValueError("Epoch indices start at 1")
    v = 1.0 + (1.0 - delta_prime) / B * t_arr
    value = (1.0 - delta_prime) + np.sqrt(2.0 * v * np.log(np.sqrt(v) / eta)) / t_arr
    return float(value) if np.ndim(value) == 0 else value


@dataclass(frozen=True)
class SeqTestState:
    """Running state of the sequential test; ``triggered_at`` is the first epoch that crossed the boundary."""

    batch_size: int
    delta_prime: float
    eta: float
    t: int = 0
    total: float = 0.0
    triggered_at: Optional[int] = None

    @property
    def running_mean(self) -> float:
        return self.total / self.t if self.t else 0.0

    @property
    def triggered(self) -> bool:
        return self.triggered_at is not None


def seq_observe(state: SeqTestState, x_t: float) -> Tuple[SeqTestState, bool]:
    """Record one batch accuracy and report whether the running mean is now above the boundary."""
    if not 0.0 <= x_t <= 1.0:
        raise ValueError(f"Batch accuracy must lie in [0, 1], got {x_t}")
    t = state.t + 1
    total = state.total + x_t
    crossed = total / t >= seq_boundary(t, state.batch_size, state.delta_prime, state.eta)
    triggered_at = state.triggered_at if state.triggered_at is not None else (t if crossed else None)
    return replace(state, t=t, total=total, triggered_at=triggered_at), bool(crossed)


def trigger_epoch(batch_means: Iterable[float], B: int, delta_prime: float, eta: float) -> Optional[int]:
    """First epoch (1-based) at which a sequence of batch accuracies triggers the test, or ``None``."""
    xs = np.asarray(list(batch_means), dtype=float)
    if xs.size == 0:
        return None
    t = np.arange(1, xs.size + 1)
    crossed = np.cumsum(xs) / t >= seq_boundary(t, B, delta_prime, eta)
    hits = np.flatnonzero(crossed)
    return int(hits[0]) + 1 if hits.size else None


def hoeffding_lower(successes: int, n: int, confidence: float) -> float:
    """
    One-sided Hoeffding lower confidence bound on a success probability.

    Raises
    ------
    InvalidSampleSizeError
        If ``n`` is not positive.
    """
    if n <= 0:
        raise InvalidSampleSizeError(n)
    if not 0 <= successes <= n:
        raise ValueError(f"successes must lie in [0, {n}], got {successes}")
    return successes / n - float(np.sqrt(np.log(1.0 / (1.0 - confidence)) / (2.0 * n)))
