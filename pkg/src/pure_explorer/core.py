"""Histories, episode modes, random streams and the rollout engine shared by every solver and baseline."""

from __future__ import annotations

import sys
from abc import ABC, abstractmethod
from dataclasses import dataclass, replace
from enum import Enum, auto
from typing import Callable, NamedTuple, Optional, Protocol, Sequence, Tuple, Union

import numpy as np

from pure_explorer.utils.exceptions import (
    AppendAfterStopError,
    HorizonCapExceeded,
    InvalidActionError,
    InvalidEpisodeModeError,
    PolicyEmittedStopInFixedBudget,
)

if sys.version_info >= (3, 10):
    from typing import TypeAlias
else:
    from typing_extensions import TypeAlias

Hypothesis: TypeAlias = int
Action: TypeAlias = int


@dataclass(frozen=True)
class Observation:
    """
    A fixed-width real vector together with the mask of revealed coordinates.

    Masked-out coordinates always carry the sentinel value 0. Scalar-reward environments use a single
    coordinate with an all-true mask.
    """

    values: Tuple[float, ...]
    mask: Tuple[bool, ...] = ()

    def __post_init__(self) -> None:
        values = tuple(float(v) for v in self.values)
        mask = tuple(bool(m) for m in self.mask) if self.mask else (True,) * len(values)
        if len(mask) != len(values):
            raise ValueError(f"Observation mask has length {len(mask)}, expected {len(values)}")
        values = tuple(v if m else 0.0 for v, m in zip(values, mask))
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mask", mask)

    @classmethod
    def scalar(cls, value: float) -> Observation:
        """Build a fully revealed one-coordinate observation."""
        return cls(values=(float(value),), mask=(True,))

    @classmethod
    def from_arrays(cls, values: Sequence[float], mask: Optional[Sequence[bool]] = None) -> Observation:
        """Build an observation from array-like values and an optional reveal mask."""
        values = tuple(np.asarray(values, dtype=float).ravel().tolist())
        if mask is None:
            return cls(values=values)
        return cls(values=values, mask=tuple(np.asarray(mask, dtype=bool).ravel().tolist()))

    @property
    def dim(self) -> int:
        return len(self.values)

    @property
    def value(self) -> float:
        """The first coordinate, i.e. the reward of a scalar observation."""
        return self.values[0]

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)

    def mask_array(self) -> np.ndarray:
        return np.asarray(self.mask, dtype=bool)


class EpisodeMode:
    """Base class of the two termination regimes."""

    allows_stop: bool = False

    @property
    def history_cap(self) -> int:
        """Largest history length (number of observations) an episode can reach."""
        raise NotImplementedError


@dataclass(frozen=True)
class FixedBudget(EpisodeMode):
    """Exactly ``n`` queries, then the inference rule answers."""

    n: int

    def __post_init__(self) -> None:
        if self.n < 1:
            raise InvalidEpisodeModeError(f"Fixed budget needs N >= 1, got {self.n}")

    @property
    def history_cap(self) -> int:
        return self.n + 1


@dataclass(frozen=True)
class FixedConfidence(EpisodeMode):
    """Query until the stop action, targeting error probability ``delta``; stopping is forced at ``n_max``."""

    delta: float
    n_max: int
    allows_stop = True

    def __post_init__(self) -> None:
        if not 0.0 < self.delta <= 0.5:
            raise InvalidEpisodeModeError(f"delta must lie in (0, 0.5], got {self.delta}")
        if self.n_max < 1:
            raise InvalidEpisodeModeError(f"N_max must be >= 1, got {self.n_max}")

    @property
    def history_cap(self) -> int:
        return self.n_max


class StopReason(Enum):
    """Why a rollout ended."""

    STOP_ACTION = auto()
    HORIZON = auto()
    ENVIRONMENT = auto()


class RandomSource:
    """
    Explicit, splittable random stream.

    Every stochastic call receives a ``RandomSource``; children are derived from integer ids through the
    ``SeedSequence`` spawn key, so the stream a component sees depends on *which* component it is and never on
    the order in which draws happened elsewhere.
    """

    def __init__(self, seed: Union[int, np.random.SeedSequence, None] = 0) -> None:
        self.seed_sequence = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        self.generator = np.random.default_rng(self.seed_sequence)

    @classmethod
    def from_ids(cls, master_seed: int, *ids: int) -> RandomSource:
        """Stream identified by a master seed and a path of integer ids."""
        return cls(np.random.SeedSequence(master_seed, spawn_key=tuple(int(i) for i in ids)))

    def child(self, *ids: int) -> RandomSource:
        """Deterministic sub-stream; the same ids always give the same stream."""
        key = tuple(self.seed_sequence.spawn_key) + tuple(int(i) for i in ids)
        return RandomSource(np.random.SeedSequence(self.seed_sequence.entropy, spawn_key=key))

    def spawn(self, n: int) -> Tuple[RandomSource, ...]:
        return tuple(self.child(i) for i in range(n))

    # Thin pass-throughs so call sites read naturally.
    def random(self, size=None):
        return self.generator.random(size)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self.generator.uniform(low, high, size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self.generator.normal(loc, scale, size)

    def integers(self, low, high=None, size=None):
        return self.generator.integers(low, high, size)

    def choice(self, a, size=None, replace_: bool = True, p=None):
        return self.generator.choice(a, size=size, replace=replace_, p=p)

    def binomial(self, n, p, size=None):
        return self.generator.binomial(n, p, size)

    def permutation(self, x):
        return self.generator.permutation(x)


@dataclass(frozen=True)
class History:
    """
    Alternating trajectory ``(x_1, a_1, x_2, ..., a_{t-1}, x_t)``.

    Histories are immutable; :func:`append` returns a new value. ``n_arms`` fixes the action set so that the
    stop action is ``n_arms``. A stopped history keeps its length: the stop action carries no observation.
    """

    initial: Observation
    steps: Tuple[Tuple[Action, Observation], ...] = ()
    n_arms: int = 1
    n_max: Optional[int] = None
    stopped: bool = False

    @property
    def t(self) -> int:
        return 1 + len(self.steps)

    @property
    def stop_action(self) -> Action:
        return self.n_arms

    @property
    def actions(self) -> Tuple[Action, ...]:
        return tuple(a for a, _ in self.steps)

    @property
    def observations(self) -> Tuple[Observation, ...]:
        return (self.initial,) + tuple(x for _, x in self.steps)

    @property
    def last_observation(self) -> Observation:
        return self.steps[-1][1] if self.steps else self.initial

    def prefix(self, t: int) -> History:
        """The history truncated to its first ``t`` observations (never stopped)."""
        if not 1 <= t <= self.t:
            raise ValueError(f"Prefix length {t} outside [1, {self.t}]")
        return replace(self, steps=self.steps[: t - 1], stopped=False)


def append(h: History, a: Action, x: Optional[Observation] = None) -> History:
    """
    Return a new history with action ``a`` and observation ``x`` appended.

    Appending the stop action marks the history as stopped without adding an observation.

    Parameters
    ----------
    h : History
        The history to extend; it is left unchanged.
    a : Action
        Query index in ``[0, K)`` or the stop action ``K``.
    x : Observation, optional
        The observation produced by the query. Ignored for the stop action.

    Returns
    -------
    History
        The extended history.

    Raises
    ------
    AppendAfterStopError
        If ``h`` already ended with the stop action.
    HorizonCapExceeded
        If ``h`` is already at its horizon cap.
    """
    if h.stopped:
        raise AppendAfterStopError()
    if not 0 <= a <= h.n_arms:
        raise InvalidActionError(a, h.n_arms)
    if a == h.stop_action:
        return replace(h, stopped=True)
    if h.n_max is not None and h.t >= h.n_max:
        raise HorizonCapExceeded(h.t + 1, h.n_max)
    if x is None:
        raise ValueError("A non-stop action needs an observation")
    return replace(h, steps=h.steps + ((int(a), x),))


class Environment(Protocol):
    """What the rollout engine needs from an environment instance."""

    n_arms: int
    h_star: Hypothesis

    def initial_observation(self, rng: RandomSource) -> Observation: ...

    def step(self, h: History, a: Action, rng: RandomSource) -> Observation: ...

    def is_terminal(self, h: History) -> bool: ...


class Policy(ABC):
    """
    A sampling rule together with a recommendation rule.

    ``act`` may return the stop action ``history.n_arms`` in fixed-confidence mode. ``recommend`` is the
    inference rule applied when the episode ends.
    """

    def reset(self) -> None:
        """Clear per-episode state; called by :func:`rollout` before the first action."""

    @abstractmethod
    def act(self, history: History, rng: RandomSource) -> Action:
        """Choose the next action."""

    def recommend(self, history: History) -> Hypothesis:
        """Answer with a hypothesis for a finished history."""
        raise NotImplementedError(f"{type(self).__name__} has no recommendation rule")


class ScriptedPolicy(Policy):
    """Policy driven by a plain function of the history; useful for tests and hand-written strategies."""

    def __init__(
        self,
        script: Callable[[History], Action],
        recommender: Optional[Callable[[History], Hypothesis]] = None,
    ) -> None:
        self.script = script
        self.recommender = recommender

    def act(self, history: History, rng: RandomSource) -> Action:
        return int(self.script(history))

    def recommend(self, history: History) -> Hypothesis:
        if self.recommender is None:
            return super().recommend(history)
        return int(self.recommender(history))


class RolloutResult(NamedTuple):
    history: History
    hypothesis: Hypothesis
    stopped_by: StopReason


def rollout(env: Environment, policy: Policy, mode: EpisodeMode, rng: RandomSource) -> RolloutResult:
    """
    Run one episode of ``policy`` against ``env`` under ``mode``.

    Environment noise and policy randomisation use separate children of ``rng`` so that two policies facing the
    same environment see the same observation stream for the same query sequence.

    Parameters
    ----------
    env : Environment
        A freshly sampled environment instance.
    policy : Policy
        The sampling rule; it is reset before the first action.
    mode : EpisodeMode
        Fixed budget (exactly N queries) or fixed confidence (until stop, forced at N_max).
    rng : RandomSource
        The episode's random stream.

    Returns
    -------
    RolloutResult
        The history, the environment's ground-truth hypothesis and the termination reason.

    Raises
    ------
    PolicyEmittedStopInFixedBudget
        If the policy emits the stop action under a fixed budget.
    HorizonCapExceeded
        If the history would grow past the mode's cap.
    """
    env_rng, policy_rng = rng.child(0), rng.child(1)
    cap = mode.history_cap
    policy.reset()
    history = History(initial=env.initial_observation(env_rng), n_arms=env.n_arms, n_max=cap)

    while True:
        if env.is_terminal(history):
            return RolloutResult(history, env.h_star, StopReason.ENVIRONMENT)
        if history.t >= cap:
            return RolloutResult(history, env.h_star, StopReason.HORIZON)

        action = int(policy.act(history, policy_rng))
        if action == history.stop_action:
            if not mode.allows_stop:
                raise PolicyEmittedStopInFixedBudget(history.t)
            return RolloutResult(append(history, action), env.h_star, StopReason.STOP_ACTION)

        history = append(history, action, env.step(history, action, env_rng))
        if history.t > cap:
            raise HorizonCapExceeded(history.t, cap)
