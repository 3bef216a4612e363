"""
Training losses for the inference and Q networks, each returning the loss and its parameter gradient.

Networks are duck-typed: ``forward(histories, training, rng)`` returns outputs and a cache, ``backward(cache,
d_out)`` returns parameter gradients, ``outputs(histories)`` runs a gradient-free forward pass. Targets are
computed from the target copies and never differentiated.
"""

from __future__ import annotations

from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from scipy.special import log_softmax, softmax

from pure_explorer.config import COST_FLOOR
from pure_explorer.core import History, RandomSource
from pure_explorer.learner.buffer import Transition

Grads = Dict[str, np.ndarray]


def inference_bonus(infer, histories: Sequence[History], log_reward: bool = False) -> np.ndarray:
    """``max_H I(H | D)`` for every history, or its logarithm."""
    log_p = log_softmax(infer.outputs(list(histories)), axis=-1).max(axis=-1)
    return log_p if log_reward else np.exp(log_p)


def inference_loss(
    batch: Sequence[Transition],
    infer,
    training: bool = False,
    rng: Optional[RandomSource] = None,
) -> Tuple[float, Grads]:
    """
    Mean negative log-likelihood of the true hypothesis given the post-transition history.

    Stop transitions contribute their pre-action history, which is the final history of their episode.
    """
    if not batch:
        raise ValueError("inference_loss needs a non-empty batch")
    B = len(batch)
    logits, cache = infer.forward([tr.label_history for tr in batch], training=training, rng=rng)
    labels = np.array([tr.hypothesis for tr in batch])
    rows = np.arange(B)
    loss = -float(log_softmax(logits, axis=-1)[rows, labels].mean())
    d_out = softmax(logits, axis=-1)
    d_out[rows, labels] -= 1.0
    return loss, infer.backward(cache, d_out / B)


def _continue_targets(
    batch: Sequence[Transition],
    rows: np.ndarray,
    q_target,
    infer_target,
    gamma: float,
    log_reward: bool,
) -> np.ndarray:
    """Bootstrapped value of ``D_{t+1}`` for the given items: the inference bonus at terminals, else max Q."""
    terminal = np.array([batch[i].terminal for i in rows], dtype=bool)
    targets = np.empty(len(rows))
    if terminal.any():
        targets[terminal] = inference_bonus(
            infer_target, [batch[i].next_history for i in rows[terminal]], log_reward
        )
    if (~terminal).any():
        nxt = q_target.outputs([batch[i].next_history for i in rows[~terminal]])
        targets[~terminal] = gamma * nxt.max(axis=-1)
    return targets


def q_loss_fixed_budget(
    batch: Sequence[Transition],
    q,
    q_target,
    infer_target,
    gamma: float = 1.0,
    log_reward: bool = False,
    training: bool = False,
    rng: Optional[RandomSource] = None,
) -> Tuple[float, Grads]:
    """
    Mean squared Bellman error of ``Q(D_t, a_t)``.

    The target is ``max_H I(H | D_{t+1})`` when the budget is spent and ``gamma * max_a Q_target(D_{t+1}, a)``
    otherwise.
    """
    if not batch:
        raise ValueError("q_loss_fixed_budget needs a non-empty batch")
    B = len(batch)
    q_out, cache = q.forward([tr.history for tr in batch], training=training, rng=rng)
    rows = np.arange(B)
    actions = np.array([tr.action for tr in batch])
    targets = _continue_targets(batch, rows, q_target, infer_target, gamma, log_reward)
    diff = q_out[rows, actions] - targets

    d_out = np.zeros_like(q_out)
    d_out[rows, actions] = 2.0 * diff / B
    return float(np.mean(diff**2)), q.backward(cache, d_out)


def q_loss_fixed_confidence(
    batch: Sequence[Transition],
    q,
    q_target,
    infer_target,
    cost: float,
    gamma: float = 1.0,
    log_reward: bool = False,
    training: bool = False,
    rng: Optional[RandomSource] = None,
) -> Tuple[float, Grads]:
    """
    Bellman error of the query heads plus a stop-head regression on every item.

    Logged queries regress ``Q(D_t, a_t)`` onto ``-cost + max_a Q_target(D_{t+1}, a)``, or onto
    ``-cost + max_H I(H | D_{t+1})`` when ``D_{t+1}`` cannot be extended. Every item, whatever its logged
    action, also regresses ``Q(D_t, stop)`` onto ``max_H I_target(H | D_t)``.
    """
    if not batch:
        raise ValueError("q_loss_fixed_confidence needs a non-empty batch")
    if cost <= 0.0:
        raise ValueError(f"The per-step cost must be positive, got {cost}")
    B = len(batch)
    q_out, cache = q.forward([tr.history for tr in batch], training=training, rng=rng)
    stop = q_out.shape[1] - 1
    d_out = np.zeros_like(q_out)
    loss = 0.0

    cont = np.array([i for i, tr in enumerate(batch) if not tr.is_stop], dtype=int)
    if cont.size:
        actions = np.array([batch[i].action for i in cont])
        targets = -cost + _continue_targets(batch, cont, q_target, infer_target, gamma, log_reward)
        diff = q_out[cont, actions] - targets
        loss += float(np.sum(diff**2)) / B
        d_out[cont, actions] = 2.0 * diff / B

    stop_targets = inference_bonus(infer_target, [tr.history for tr in batch], log_reward)
    stop_diff = q_out[:, stop] - stop_targets
    loss += float(np.sum(stop_diff**2)) / B
    d_out[:, stop] += 2.0 * stop_diff / B
    return loss, q.backward(cache, d_out)


def cost_update(cost: float, delta: float, outcomes: Sequence[bool], beta: float) -> float:
    """
    One step of the per-query cost: ``max(c_min, c - beta * ((1 - delta) - p_hat))``.

    Accuracy above ``1 - delta`` raises the cost (stop sooner); accuracy below lowers it.
    """
    if beta <= 0.0:
        raise ValueError(f"Cost step must be positive, got {beta}")
    if len(outcomes) == 0:
        raise ValueError("cost_update needs at least one evaluation outcome")
    p_hat = float(np.mean(outcomes))
    return max(COST_FLOOR, cost - beta * ((1.0 - delta) - p_hat))
