"""Replay storage for partial trajectories."""

from __future__ import annotations

from typing import List, NamedTuple, Optional

from pure_explorer.core import Action, EpisodeMode, History, Hypothesis, RandomSource, RolloutResult, StopReason
from pure_explorer.utils.exceptions import EmptyBufferError


class Transition(NamedTuple):
    """
    One step ``(D_t, a_t, D_{t+1})`` of a finished episode, labelled with the true hypothesis.

    ``next_history`` is ``None`` for the stop action. ``terminal`` marks the last query of an episode: the
    fixed budget is spent, the forced-stop horizon is reached, or the environment ended the episode.
    """

    history: History
    action: Action
    next_history: Optional[History]
    terminal: bool
    hypothesis: Hypothesis

    @property
    def is_stop(self) -> bool:
        return self.next_history is None

    @property
    def label_history(self) -> History:
        """History the inference network is trained on for this item."""
        return self.history if self.next_history is None else self.next_history


def transitions_from_history(result: RolloutResult, mode: EpisodeMode) -> List[Transition]:
    """
    Split a finished rollout into replay transitions.

    Parameters
    ----------
    result : RolloutResult
        The episode, its true hypothesis and termination reason.
    mode : EpisodeMode
        The episode's mode; its history cap decides which transitions are terminal.

    Returns
    -------
    List[Transition]
        One transition per query, plus a stop transition when the policy stopped.
    """
    history, h_star = result.history, result.hypothesis
    cap = mode.history_cap
    n_queries = len(history.steps)
    out = []
    for i, (a, _) in enumerate(history.steps):
        nxt = history.prefix(i + 2)
        last = i == n_queries - 1
        terminal = nxt.t >= cap or (last and result.stopped_by == StopReason.ENVIRONMENT)
        out.append(Transition(history.prefix(i + 1), a, nxt, terminal, h_star))
    if result.stopped_by == StopReason.STOP_ACTION:
        out.append(Transition(history.prefix(history.t), history.stop_action, None, True, h_star))
    return out


class ReplayBuffer:
    """Fixed-capacity ring buffer with uniform sampling with replacement."""

    def __init__(self, capacity: int) -> None:
        if capacity < 1:
            raise ValueError(f"Replay capacity must be positive, got {capacity}")
        self.capacity = capacity
        self._items: List[Transition] = []
        self._next = 0

    def __len__(self) -> int:
        return len(self._items)

    def add(self, transition: Transition) -> None:
        if len(self._items) < self.capacity:
            self._items.append(transition)
        else:
            self._items[self._next] = transition
        self._next = (self._next + 1) % self.capacity

    def extend(self, transitions: List[Transition]) -> None:
        for transition in transitions:
            self.add(transition)

    def sample(self, batch_size: int, rng: RandomSource) -> List[Transition]:
        if not self._items:
            raise EmptyBufferError()
        return [self._items[i] for i in rng.integers(len(self._items), size=batch_size)]
