"""Environment families, their priors, and the observation laws shared by the posterior and exact modules."""

from __future__ import annotations

import hashlib
import json
import math
import re
from dataclasses import dataclass
from enum import Enum
from typing import Any, Callable, Dict, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.stats import norm

from pure_explorer.config import DEFAULT_MIN_GAP, DEFAULT_SIGMA, MIN_GAP_MEAN_SCALE, REJECTION_BUDGET
from pure_explorer.core import Action, History, Hypothesis, Observation, RandomSource
from pure_explorer.utils.exceptions import (
    BadGraphParams,
    RejectionBudgetExhausted,
    TieAtOptimum,
    UnknownPresetError,
    UnsupportedFamilyError,
)

_REJECTION_CHUNK = 256
FEEDBACK_GRAPH_SIGMA = math.sqrt(0.2)
MAGIC_ROOM_REWARD_PROB = 0.25


class EnvFamily(str, Enum):
    """Environment families available to priors."""

    GAUSSIAN_MIN_GAP = "gaussian_min_gap"
    DETERMINISTIC = "deterministic"
    MAGIC_ACTION = "magic_action"
    MAGIC_CHAIN = "magic_chain"
    FEEDBACK_GRAPH = "feedback_graph"
    BINARY_SEARCH = "binary_search"
    MAGIC_ROOM = "magic_room"


class GraphKind(str, Enum):
    """Feedback-graph shapes."""

    LOOPY_STAR = "loopy_star"
    RING = "ring"
    LOOPLESS_CLIQUE = "loopless_clique"


DEFAULT_GRAPH_PARAMS: Dict[GraphKind, Tuple[float, ...]] = {
    GraphKind.LOOPY_STAR: (0.25, 0.3, 0.35),
    GraphKind.RING: (0.3,),
    GraphKind.LOOPLESS_CLIQUE: (0.5,),
}

# Families whose observation law depends only on the pulled arm and is a scalar.
SCALAR_FAMILIES = frozenset(
    {
        EnvFamily.GAUSSIAN_MIN_GAP,
        EnvFamily.DETERMINISTIC,
        EnvFamily.MAGIC_ACTION,
        EnvFamily.MAGIC_CHAIN,
        EnvFamily.BINARY_SEARCH,
    }
)


class RoomAction(int, Enum):
    """Magic Room moves; coordinates are (column z, row y) with y growing downwards."""

    UP = 0
    DOWN = 1
    LEFT = 2
    RIGHT = 3
    EXIT = 4


class Door(int, Enum):
    TOP = 0
    BOTTOM = 1
    LEFT = 2
    RIGHT = 3


# (c1, c2) -> door, and its inverse.
CLUES_TO_DOOR: Dict[Tuple[int, int], Door] = {
    (-1, -1): Door.TOP,
    (-1, 1): Door.BOTTOM,
    (1, -1): Door.LEFT,
    (1, 1): Door.RIGHT,
}
DOOR_TO_CLUES: Dict[Door, Tuple[int, int]] = {door: clues for clues, door in CLUES_TO_DOOR.items()}


@dataclass(frozen=True, eq=False)
class FeedbackGraph:
    """Reveal probabilities: ``G[u, v]`` is the chance that playing ``u`` reveals the reward of ``v``."""

    G: np.ndarray

    def __post_init__(self) -> None:
        G = np.array(self.G, dtype=float)
        if G.ndim != 2 or G.shape[0] != G.shape[1]:
            raise BadGraphParams(f"Feedback graph must be a square matrix, got shape {G.shape}")
        if np.any(G < 0.0) or np.any(G > 1.0):
            raise BadGraphParams("Feedback graph entries must lie in [0, 1]")
        G.flags.writeable = False
        object.__setattr__(self, "G", G)

    @property
    def k(self) -> int:
        return self.G.shape[0]


@dataclass(frozen=True)
class RoomLayout:
    """Static layout of one Magic Room instance."""

    size: int
    door: Door
    clue_cells: Tuple[Tuple[int, int], Tuple[int, int]]
    clue_values: Tuple[int, int]

    @property
    def start(self) -> Tuple[int, int]:
        return (self.size // 2, self.size // 2)

    def door_cells(self) -> Dict[Tuple[int, int], Door]:
        mid, last = self.size // 2, self.size - 1
        return {(mid, 0): Door.TOP, (mid, last): Door.BOTTOM, (0, mid): Door.LEFT, (last, mid): Door.RIGHT}


@dataclass(frozen=True, eq=False)
class EnvModel:
    """
    One concrete environment instance drawn from a prior.

    ``means`` and ``noise`` are per-query arrays for the bandit families; ``graph``, ``chain`` and ``room`` hold
    the family-specific structure. Instances are immutable and satisfy the rollout engine's environment protocol.
    """

    family: EnvFamily
    means: np.ndarray
    noise: np.ndarray
    h_star: Hypothesis
    graph: Optional[FeedbackGraph] = None
    chain: Tuple[int, ...] = ()
    room: Optional[RoomLayout] = None

    def __post_init__(self) -> None:
        for name in ("means", "noise"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @classmethod
    def bandit(
        cls,
        means: Sequence[float],
        noise: float | Sequence[float] = 0.0,
        family: EnvFamily = EnvFamily.DETERMINISTIC,
        **structure,
    ) -> EnvModel:
        """Build a bandit-style instance whose hypothesis is the unique best arm."""
        means = np.asarray(means, dtype=float)
        noise = np.broadcast_to(np.asarray(noise, dtype=float), means.shape)
        return cls(family=family, means=means, noise=noise, h_star=_unique_argmax(means), **structure)

    @property
    def n_arms(self) -> int:
        """Number of queries, the stop action excluded."""
        if self.family == EnvFamily.MAGIC_ROOM:
            return len(RoomAction)
        return len(self.means)

    @property
    def n_hypotheses(self) -> int:
        if self.family == EnvFamily.MAGIC_ROOM:
            return len(Door)
        return len(self.means)

    @property
    def obs_dim(self) -> int:
        if self.family == EnvFamily.FEEDBACK_GRAPH:
            return len(self.means)
        if self.family == EnvFamily.MAGIC_ROOM:
            return 5
        return 1

    def initial_observation(self, rng: RandomSource) -> Observation:
        return initial_observation(self)

    def step(self, h: History, a: Action, rng: RandomSource) -> Observation:
        return env_step(self, h, a, rng)

    def is_terminal(self, h: History) -> bool:
        if self.family != EnvFamily.MAGIC_ROOM or not h.steps:
            return False
        a, x = h.steps[-1]
        return a == RoomAction.EXIT and _position(x) in self.room.door_cells()

    def scalar_law(self, a: Action) -> Tuple[float, float]:
        """Location and scale of the scalar observation of query ``a`` (scale 0 means a point mass)."""
        if self.family not in SCALAR_FAMILIES:
            raise UnsupportedFamilyError(self.family.value, "scalar observation laws")
        if self.family == EnvFamily.BINARY_SEARCH:
            return float(_direction(a, self.h_star)), 0.0
        return float(self.means[a]), float(self.noise[a])

    def cell_probabilities(self, a: Action, grid) -> np.ndarray:
        """Probability of each cell of an ``ObservationGrid`` for the observation of query ``a``."""
        return grid.cell_probabilities(*self.scalar_law(a))

    def log_density(self, h: History, a: Action, x: Observation) -> float:
        """Log density (or log mass for discrete parts) of observing ``x`` after query ``a`` at history ``h``."""
        return _LOG_DENSITIES[self.family](self, h, a, x)

    def fingerprint(self) -> str:
        """Stable content hash, used to key caches."""
        payload = {
            "family": self.family.value,
            "means": self.means.round(12).tolist(),
            "noise": self.noise.round(12).tolist(),
            "h_star": int(self.h_star),
            "graph": None if self.graph is None else self.graph.G.round(12).tolist(),
            "chain": list(self.chain),
            "room": None if self.room is None else [self.room.size, int(self.room.door), self.room.clue_cells],
        }
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


class PriorSpec(BaseModel):
    """
    A distribution over environment instances.

    ``k`` is the number of queries for the bandit families and the room side for the Magic Room. A prior either
    samples from its family's continuous law or, when ``support`` is set, from a finite list of models with
    ``weights``.
    """

    family: EnvFamily
    k: int = Field(ge=2)
    sigma: Optional[float] = Field(default=None, ge=0.0)
    min_gap: float = Field(default=DEFAULT_MIN_GAP, ge=0.0)
    mean_low: Optional[float] = None
    mean_high: Optional[float] = None
    sigma_magic: float = Field(default=0.0, ge=0.0)
    n_magic: int = Field(default=1, ge=1)
    graph_kind: Optional[GraphKind] = None
    graph_params: Tuple[float, ...] = ()
    support: Optional[Tuple[Any, ...]] = Field(default=None, exclude=True)  # EnvModel instances
    weights: Optional[Tuple[float, ...]] = Field(default=None, exclude=True)

    model_config = ConfigDict(frozen=True)

    @model_validator(mode="after")
    def _check_family(self) -> PriorSpec:
        if self.family == EnvFamily.MAGIC_CHAIN and self.n_magic > self.k - 1:
            raise ValueError(f"A magic chain needs n_magic <= k - 1, got n_magic={self.n_magic}, k={self.k}")
        if self.family == EnvFamily.FEEDBACK_GRAPH and self.k < 3:
            raise ValueError("Feedback graphs need k >= 3")
        if self.family == EnvFamily.MAGIC_ROOM and self.k < 4:
            raise ValueError("The Magic Room needs a side of at least 4 cells")
        if (self.support is None) != (self.weights is None):
            raise ValueError("support and weights must be given together")
        if self.support is not None:
            if len(self.support) != len(self.weights):
                raise ValueError("support and weights must have the same length")
            if abs(sum(self.weights) - 1.0) > 1e-12 or min(self.weights) < 0.0:
                raise ValueError("Finite prior weights must be non-negative and sum to 1")
        low, high = self.mean_bounds
        if high < low:
            raise ValueError(f"mean_high={high} is below mean_low={low}")
        return self

    @property
    def is_finite(self) -> bool:
        return self.support is not None

    @property
    def regular_sigma(self) -> float:
        """Reward noise of the regular arms, with the family default when unset."""
        if self.sigma is not None:
            return self.sigma
        if self.family == EnvFamily.GAUSSIAN_MIN_GAP:
            return DEFAULT_SIGMA
        if self.family == EnvFamily.MAGIC_ACTION:
            return max(1.0 - self.sigma_magic, 0.0)
        if self.family == EnvFamily.FEEDBACK_GRAPH:
            return FEEDBACK_GRAPH_SIGMA
        return 0.0

    @property
    def mean_bounds(self) -> Tuple[float, float]:
        defaults = {
            EnvFamily.GAUSSIAN_MIN_GAP: (0.0, MIN_GAP_MEAN_SCALE * self.k),
            EnvFamily.MAGIC_ACTION: (1.0, 5.0),
            EnvFamily.MAGIC_CHAIN: (1.0, 2.0),
        }
        low, high = defaults.get(self.family, (0.0, 1.0))
        return (
            low if self.mean_low is None else self.mean_low,
            high if self.mean_high is None else self.mean_high,
        )

    @property
    def n_arms(self) -> int:
        return len(RoomAction) if self.family == EnvFamily.MAGIC_ROOM else self.k

    @property
    def n_hypotheses(self) -> int:
        return len(Door) if self.family == EnvFamily.MAGIC_ROOM else self.k

    @property
    def obs_dim(self) -> int:
        if self.family == EnvFamily.FEEDBACK_GRAPH:
            return self.k
        if self.family == EnvFamily.MAGIC_ROOM:
            return 5
        return 1

    def with_support(self, models: Sequence[EnvModel], weights: Optional[Sequence[float]] = None) -> PriorSpec:
        """Return a finite-support copy of this prior."""
        if weights is None:
            weights = np.full(len(models), 1.0 / len(models))
        weights = np.asarray(weights, dtype=float)
        weights = weights / weights.sum()
        return self.model_copy(update={"support": tuple(models), "weights": tuple(weights.tolist())})

    def spec_hash(self) -> str:
        """Content hash of the prior, including its finite support when present."""
        digest = hashlib.sha256(self.model_dump_json().encode())
        if self.support is not None:
            for model, weight in zip(self.support, self.weights):
                digest.update(model.fingerprint().encode())
                digest.update(repr(round(weight, 15)).encode())
        return digest.hexdigest()


# ----------------------------------------------------------------------------------------------------------------
# Operations
# ----------------------------------------------------------------------------------------------------------------


def sample_env(spec: PriorSpec, rng: RandomSource) -> EnvModel:
    """
    Draw one environment instance from ``spec``.

    Parameters
    ----------
    spec : PriorSpec
        The prior; finite priors sample a support model according to their weights.
    rng : RandomSource
        Random stream for the draw.

    Returns
    -------
    EnvModel
        An instance satisfying every invariant of its family.

    Raises
    ------
    RejectionBudgetExhausted
        If the minimum-gap condition cannot be met within the rejection budget.
    """
    if spec.support is not None:
        index = int(rng.choice(len(spec.support), p=np.asarray(spec.weights)))
        return spec.support[index]
    return _SAMPLERS[spec.family](spec, rng)


def env_step(env: EnvModel, h: History, a: Action, rng: RandomSource) -> Observation:
    """Draw the observation that follows query ``a`` at history ``h``."""
    if not 0 <= a < env.n_arms:
        raise ValueError(f"Query {a} is not a valid non-stop action for {env.n_arms} arms")
    return _STEPS[env.family](env, h, a, rng)


def initial_observation(env: EnvModel) -> Observation:
    """The uninformative first observation ``x_1``; identical across instances of a prior."""
    if env.family == EnvFamily.FEEDBACK_GRAPH:
        return Observation(values=(0.0,) * env.obs_dim, mask=(False,) * env.obs_dim)
    if env.family == EnvFamily.MAGIC_ROOM:
        z, y = env.room.start
        return Observation.from_arrays([z, y, 0, 0, 0])
    return Observation.scalar(0.0)


def true_hypothesis(env: EnvModel) -> Hypothesis:
    """
    The ground-truth hypothesis of an instance.

    Best-arm families return the unique argmax of the means; the binary search returns its target and the Magic
    Room its correct door.

    Raises
    ------
    TieAtOptimum
        If two arms share the best mean exactly.
    """
    if env.family == EnvFamily.BINARY_SEARCH:
        return int(env.h_star)
    if env.family == EnvFamily.MAGIC_ROOM:
        return int(env.room.door)
    return _unique_argmax(env.means)


def default_graph(kind: GraphKind, K: int, params: Sequence[float] = ()) -> FeedbackGraph:
    """
    Build one of the standard feedback graphs.

    Parameters
    ----------
    kind : GraphKind
        Loopy star ``(p, q, r)``, ring ``(p,)`` or loopless clique ``(p,)``.
    K : int
        Number of nodes, at least 3.
    params : Sequence[float]
        Edge probabilities; the defaults of :data:`DEFAULT_GRAPH_PARAMS` are used when empty.

    Returns
    -------
    FeedbackGraph
        The reveal-probability matrix.

    Raises
    ------
    BadGraphParams
        If ``K < 3`` or a parameter lies outside ``[0, 1]``.
    """
    kind = GraphKind(kind)
    if K < 3:
        raise BadGraphParams(f"Feedback graphs need at least 3 nodes, got {K}")
    params = tuple(params) or DEFAULT_GRAPH_PARAMS[kind]
    expected = len(DEFAULT_GRAPH_PARAMS[kind])
    if len(params) != expected:
        raise BadGraphParams(f"{kind.value} takes {expected} parameter(s), got {len(params)}")
    if any(not 0.0 <= p <= 1.0 for p in params):
        raise BadGraphParams(f"Graph parameters must be probabilities, got {params}")

    G = np.zeros((K, K))
    if kind == GraphKind.LOOPY_STAR:
        p, q, r = params
        # Node 0 is the centre, node K-1 its favoured neighbour.
        G[0, 0] = q
        G[0, 1 : K - 1] = r
        G[0, K - 1] = p
        for leaf in range(1, K - 1):
            G[leaf, leaf] = max(1.0 - 2.0 * p, 0.0)
        G[K - 1, K - 1] = 1.0 - p
    elif kind == GraphKind.RING:
        (p,) = params
        for u in range(K):
            G[u, (u + 1) % K] = p
            G[u, (u - 1) % K] = 1.0 - p
    else:
        (p,) = params
        for u in range(1, K + 1):
            for v in range(1, K + 1):
                if u == v:
                    continue
                G[u - 1, v - 1] = p / u if v % 2 == 1 else 1.0 - p / u
    return FeedbackGraph(G)


def magic_phi(index: int, k: int) -> float:
    """Encode a 0-based arm index as a magic mean: ``phi(i) = i / K`` on 1-based indices."""
    return (index + 1) / k


def magic_decode(value: float, k: int) -> int:
    """Invert :func:`magic_phi` on a noiseless magic reward."""
    return int(round(value * k)) - 1


# ----------------------------------------------------------------------------------------------------------------
# Samplers
# ----------------------------------------------------------------------------------------------------------------


def _sample_gaussian_min_gap(spec: PriorSpec, rng: RandomSource) -> EnvModel:
    low, high = spec.mean_bounds
    attempts = 0
    while attempts < REJECTION_BUDGET:
        n = min(_REJECTION_CHUNK, REJECTION_BUDGET - attempts)
        draws = rng.uniform(low, high, size=(n, spec.k))
        top_two = np.sort(draws, axis=1)[:, -2:]
        valid = np.flatnonzero(top_two[:, 1] - top_two[:, 0] >= spec.min_gap)
        if valid.size:
            return EnvModel.bandit(draws[valid[0]], spec.regular_sigma, EnvFamily.GAUSSIAN_MIN_GAP)
        attempts += n
    raise RejectionBudgetExhausted(attempts, f"top-two gap >= {spec.min_gap} on [{low}, {high}]")


def _sample_deterministic(spec: PriorSpec, rng: RandomSource) -> EnvModel:
    low, high = spec.mean_bounds
    return EnvModel.bandit(rng.uniform(low, high, size=spec.k), 0.0, EnvFamily.DETERMINISTIC)


def _sample_magic_action(spec: PriorSpec, rng: RandomSource) -> EnvModel:
    low, high = spec.mean_bounds
    means = np.empty(spec.k)
    means[1:] = rng.uniform(low, high, size=spec.k - 1)
    best = 1 + int(np.argmax(means[1:]))
    means[0] = magic_phi(best, spec.k)
    noise = np.full(spec.k, spec.regular_sigma)
    noise[0] = spec.sigma_magic
    return EnvModel.bandit(means, noise, EnvFamily.MAGIC_ACTION, chain=(0,))


def _sample_magic_chain(spec: PriorSpec, rng: RandomSource) -> EnvModel:
    low, high = spec.mean_bounds
    hidden = rng.permutation(np.arange(1, spec.k))
    chain = (0,) + tuple(int(i) for i in hidden[: spec.n_magic - 1])
    regular = np.array(sorted(set(range(spec.k)) - set(chain)))
    means = np.zeros(spec.k)
    means[regular] = rng.uniform(low, high, size=regular.size)
    best = int(regular[np.argmax(means[regular])])
    for here, nxt in zip(chain, chain[1:] + (best,)):
        means[here] = magic_phi(nxt, spec.k)
    return EnvModel.bandit(means, 0.0, EnvFamily.MAGIC_CHAIN, chain=chain)


def _sample_feedback_graph(spec: PriorSpec, rng: RandomSource) -> EnvModel:
    low, high = spec.mean_bounds
    graph = default_graph(spec.graph_kind or GraphKind.LOOPY_STAR, spec.k, spec.graph_params)
    means = rng.uniform(low, high, size=spec.k)
    return EnvModel.bandit(means, spec.regular_sigma, EnvFamily.FEEDBACK_GRAPH, graph=graph)


def _sample_binary_search(spec: PriorSpec, rng: RandomSource) -> EnvModel:
    target = int(rng.integers(spec.k))
    return binary_search_env(spec.k, target)


def _sample_magic_room(spec: PriorSpec, rng: RandomSource) -> EnvModel:
    door = Door(int(rng.integers(len(Door))))
    size = spec.k
    start = (size // 2, size // 2)
    # Clues lie in the [1, K-1] x [1, K-1] sub-grid, never on the start cell.
    interior = [(z, y) for z in range(1, size) for y in range(1, size) if (z, y) != start]
    picked = rng.choice(len(interior), size=2, replace_=False)
    layout = RoomLayout(
        size=size,
        door=door,
        clue_cells=(interior[int(picked[0])], interior[int(picked[1])]),
        clue_values=DOOR_TO_CLUES[door],
    )
    return magic_room_env(layout)


def binary_search_env(k: int, target: int) -> EnvModel:
    """Binary-search instance over ``k`` positions with the given target."""
    return EnvModel(family=EnvFamily.BINARY_SEARCH, means=np.zeros(k), noise=np.zeros(k), h_star=int(target))


def magic_room_env(layout: RoomLayout) -> EnvModel:
    """Magic Room instance for a fixed layout."""
    return EnvModel(
        family=EnvFamily.MAGIC_ROOM,
        means=np.zeros(len(RoomAction)),
        noise=np.zeros(len(RoomAction)),
        h_star=int(layout.door),
        room=layout,
    )


_SAMPLERS: Dict[EnvFamily, Callable[[PriorSpec, RandomSource], EnvModel]] = {
    EnvFamily.GAUSSIAN_MIN_GAP: _sample_gaussian_min_gap,
    EnvFamily.DETERMINISTIC: _sample_deterministic,
    EnvFamily.MAGIC_ACTION: _sample_magic_action,
    EnvFamily.MAGIC_CHAIN: _sample_magic_chain,
    EnvFamily.FEEDBACK_GRAPH: _sample_feedback_graph,
    EnvFamily.BINARY_SEARCH: _sample_binary_search,
    EnvFamily.MAGIC_ROOM: _sample_magic_room,
}


# ----------------------------------------------------------------------------------------------------------------
# Observation laws
# ----------------------------------------------------------------------------------------------------------------


def _step_scalar(env: EnvModel, h: History, a: Action, rng: RandomSource) -> Observation:
    loc, scale = env.scalar_law(a)
    if scale > 0.0:
        return Observation.scalar(loc + scale * rng.normal())
    return Observation.scalar(loc)


def _step_feedback(env: EnvModel, h: History, a: Action, rng: RandomSource) -> Observation:
    revealed = rng.random(env.obs_dim) < env.graph.G[a]
    values = rng.normal(env.means, env.noise)
    return Observation.from_arrays(values, revealed)


def _step_room(env: EnvModel, h: History, a: Action, rng: RandomSource) -> Observation:
    z, y, c1, c2, door = _room_transition(env.room, h.last_observation, a)
    reward = 0.0
    if door is not None:
        # Always draw so the stream does not depend on which door was tried.
        lucky = rng.random() < MAGIC_ROOM_REWARD_PROB
        reward = 1.0 if (door == env.room.door and lucky) else 0.0
    return Observation.from_arrays([z, y, c1, c2, reward])


_STEPS = {
    EnvFamily.GAUSSIAN_MIN_GAP: _step_scalar,
    EnvFamily.DETERMINISTIC: _step_scalar,
    EnvFamily.MAGIC_ACTION: _step_scalar,
    EnvFamily.MAGIC_CHAIN: _step_scalar,
    EnvFamily.BINARY_SEARCH: _step_scalar,
    EnvFamily.FEEDBACK_GRAPH: _step_feedback,
    EnvFamily.MAGIC_ROOM: _step_room,
}


def _log_density_scalar(env: EnvModel, h: History, a: Action, x: Observation) -> float:
    loc, scale = env.scalar_law(a)
    if scale > 0.0:
        return float(norm.logpdf(x.value, loc=loc, scale=scale))
    return 0.0 if math.isclose(x.value, loc, rel_tol=0.0, abs_tol=1e-9) else -math.inf


def _log_density_feedback(env: EnvModel, h: History, a: Action, x: Observation) -> float:
    probs = env.graph.G[a]
    mask = x.mask_array()
    with np.errstate(divide="ignore"):
        reveal = np.where(mask, np.log(probs), np.log1p(-probs))
    values = norm.logpdf(x.as_array()[mask], loc=env.means[mask], scale=env.noise[mask])
    return float(reveal.sum() + values.sum())


def _log_density_room(env: EnvModel, h: History, a: Action, x: Observation) -> float:
    z, y, c1, c2, door = _room_transition(env.room, h.last_observation, a)
    observed = x.as_array()
    if not np.allclose(observed[:4], [z, y, c1, c2]):
        return -math.inf
    reward = observed[4]
    if door is not None and door == env.room.door:
        return math.log(MAGIC_ROOM_REWARD_PROB) if reward == 1.0 else math.log(1.0 - MAGIC_ROOM_REWARD_PROB)
    return 0.0 if reward == 0.0 else -math.inf


_LOG_DENSITIES = {
    EnvFamily.GAUSSIAN_MIN_GAP: _log_density_scalar,
    EnvFamily.DETERMINISTIC: _log_density_scalar,
    EnvFamily.MAGIC_ACTION: _log_density_scalar,
    EnvFamily.MAGIC_CHAIN: _log_density_scalar,
    EnvFamily.BINARY_SEARCH: _log_density_scalar,
    EnvFamily.FEEDBACK_GRAPH: _log_density_feedback,
    EnvFamily.MAGIC_ROOM: _log_density_room,
}


def _room_transition(
    layout: RoomLayout, previous: Observation, a: Action
) -> Tuple[int, int, int, int, Optional[Door]]:
    """Deterministic part of a Magic Room step: new position, clue status and the door passed, if any."""
    z, y, c1, c2 = (int(round(v)) for v in previous.values[:4])
    door = None
    action = RoomAction(a)
    if action == RoomAction.EXIT:
        door = layout.door_cells().get((z, y))
    else:
        dz, dy = {
            RoomAction.UP: (0, -1),
            RoomAction.DOWN: (0, 1),
            RoomAction.LEFT: (-1, 0),
            RoomAction.RIGHT: (1, 0),
        }[action]
        # Walls make moves no-ops.
        z = min(max(z + dz, 0), layout.size - 1)
        y = min(max(y + dy, 0), layout.size - 1)
    clues = [c1, c2]
    for i, cell in enumerate(layout.clue_cells):
        if (z, y) == cell:
            clues[i] = layout.clue_values[i]
    return z, y, clues[0], clues[1], door


def _position(x: Observation) -> Tuple[int, int]:
    return int(round(x.values[0])), int(round(x.values[1]))


def _direction(a: Action, target: int) -> int:
    if a < target:
        return 1
    if a > target:
        return -1
    return 0


def _unique_argmax(values: np.ndarray) -> int:
    values = np.asarray(values, dtype=float)
    best = np.flatnonzero(values == values.max())
    if best.size > 1:
        raise TieAtOptimum(best.tolist())
    return int(best[0])


# ----------------------------------------------------------------------------------------------------------------
# Presets
# ----------------------------------------------------------------------------------------------------------------


def _two_model_det() -> PriorSpec:
    spec = PriorSpec(family=EnvFamily.DETERMINISTIC, k=2)
    return spec.with_support([EnvModel.bandit([1.0, 0.0]), EnvModel.bandit([0.0, 1.0])])


def _three_model_gauss() -> PriorSpec:
    spec = PriorSpec(family=EnvFamily.GAUSSIAN_MIN_GAP, k=2, sigma=0.5, min_gap=0.4)
    models = [
        EnvModel.bandit([0.6, 0.0], 0.5, EnvFamily.GAUSSIAN_MIN_GAP),
        EnvModel.bandit([0.0, 0.6], 0.5, EnvFamily.GAUSSIAN_MIN_GAP),
        EnvModel.bandit([0.9, 0.3], 0.5, EnvFamily.GAUSSIAN_MIN_GAP),
    ]
    return spec.with_support(models)


def _binary_search_finite(k: int) -> PriorSpec:
    spec = PriorSpec(family=EnvFamily.BINARY_SEARCH, k=k)
    return spec.with_support([binary_search_env(k, target) for target in range(k)])


_FIXED_PRESETS: Dict[str, Callable[[], PriorSpec]] = {
    "two-model-det": _two_model_det,
    "three-model-gauss": _three_model_gauss,
    "magic-action": lambda: PriorSpec(family=EnvFamily.MAGIC_ACTION, k=5),
    "loopy-star-small": lambda: PriorSpec(family=EnvFamily.FEEDBACK_GRAPH, k=5, graph_kind=GraphKind.LOOPY_STAR),
    "loopy-star-large": lambda: PriorSpec(family=EnvFamily.FEEDBACK_GRAPH, k=10, graph_kind=GraphKind.LOOPY_STAR),
    "ring-small": lambda: PriorSpec(family=EnvFamily.FEEDBACK_GRAPH, k=5, graph_kind=GraphKind.RING),
    "ring-large": lambda: PriorSpec(family=EnvFamily.FEEDBACK_GRAPH, k=10, graph_kind=GraphKind.RING),
    "clique-small": lambda: PriorSpec(family=EnvFamily.FEEDBACK_GRAPH, k=5, graph_kind=GraphKind.LOOPLESS_CLIQUE),
    "clique-large": lambda: PriorSpec(family=EnvFamily.FEEDBACK_GRAPH, k=10, graph_kind=GraphKind.LOOPLESS_CLIQUE),
}

_SIZED_PRESETS: Dict[str, Callable[[int], PriorSpec]] = {
    "binary-search": _binary_search_finite,
    "gaussian": lambda k: PriorSpec(family=EnvFamily.GAUSSIAN_MIN_GAP, k=k),
    "deterministic": lambda k: PriorSpec(family=EnvFamily.DETERMINISTIC, k=k),
    "magic-chain": lambda n: PriorSpec(family=EnvFamily.MAGIC_CHAIN, k=10, n_magic=n),
    "magic-room": lambda k: PriorSpec(family=EnvFamily.MAGIC_ROOM, k=k),
}


def make_prior(name: str) -> PriorSpec:
    """
    Look up a named prior.

    Fixed names (``two-model-det``, ``three-model-gauss``, ``magic-action``, feedback-graph presets) and sized
    names with a numeric suffix (``binary-search-8``, ``gaussian-4``, ``deterministic-6``, ``magic-chain-3``,
    ``magic-room-6``) are recognised.

    Raises
    ------
    UnknownPresetError
        If the name matches no preset.
    """
    if name in _FIXED_PRESETS:
        return _FIXED_PRESETS[name]()
    match = re.fullmatch(r"([a-z-]+)-(\d+)", name)
    if match and match.group(1) in _SIZED_PRESETS:
        return _SIZED_PRESETS[match.group(1)](int(match.group(2)))
    known = list(_FIXED_PRESETS) + [f"{prefix}-<n>" for prefix in _SIZED_PRESETS]
    raise UnknownPresetError(name, known)
