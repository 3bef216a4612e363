"""Tests for environment families, priors and presets."""

import math

import numpy as np
import pytest

from pure_explorer.core import History, Observation, RandomSource, append
from pure_explorer.envs import (
    EnvFamily,
    EnvModel,
    GraphKind,
    PriorSpec,
    RoomAction,
    default_graph,
    env_step,
    magic_decode,
    magic_phi,
    make_prior,
    sample_env,
    true_hypothesis,
)
from pure_explorer.utils.exceptions import BadGraphParams, TieAtOptimum, UnknownPresetError


@pytest.mark.parametrize(
    "name",
    [
        pytest.param("gaussian-4", id="gaussian"),
        pytest.param("deterministic-5", id="deterministic"),
        pytest.param("magic-action", id="magic-action"),
        pytest.param("magic-chain-3", id="magic-chain"),
        pytest.param("loopy-star-small", id="loopy-star"),
        pytest.param("ring-small", id="ring"),
        pytest.param("clique-small", id="clique"),
        pytest.param("binary-search-8", id="binary-search"),
        pytest.param("magic-room-6", id="magic-room"),
    ],
)
def test_sample_env_respects_family_invariants(name: str) -> None:
    """
    Test that every preset samples instances whose ground truth is well defined.

    Given a named prior:
    When ten instances are drawn,
    Then each has as many arms as the prior and its hypothesis matches ``true_hypothesis``.
    """
    spec = make_prior(name)
    rng = RandomSource(1)

    for i in range(10):
        env = sample_env(spec, rng.child(i))
        assert env.n_arms == spec.n_arms
        assert 0 <= env.h_star < spec.n_hypotheses
        assert true_hypothesis(env) == env.h_star


def test_gaussian_min_gap_is_respected() -> None:
    spec = PriorSpec(family=EnvFamily.GAUSSIAN_MIN_GAP, k=4, min_gap=0.3)

    for i in range(50):
        env = sample_env(spec, RandomSource(i))
        top_two = np.sort(env.means)[-2:]
        assert top_two[1] - top_two[0] >= 0.3
        assert np.all(env.noise == spec.regular_sigma)


def test_magic_action_encodes_best_arm() -> None:
    """
    Test the magic-action encoding.

    Given a magic-action instance:
    When the magic arm's mean is decoded,
    Then it names the best regular arm.
    """
    spec = make_prior("magic-action")
    for i in range(20):
        env = sample_env(spec, RandomSource(i))
        assert magic_decode(env.means[0], spec.k) == env.h_star
        assert env.h_star != 0


def test_magic_chain_links_to_best_arm() -> None:
    spec = make_prior("magic-chain-3")
    env = sample_env(spec, RandomSource(4))

    # Following the chain from arm 0 reaches the best arm after n_magic hops.
    arm = 0
    for _ in range(spec.n_magic):
        arm = magic_decode(env.means[arm], spec.k)
    assert arm == env.h_star
    assert env.chain[0] == 0
    assert len(env.chain) == 3


def test_magic_phi_round_trips() -> None:
    assert all(magic_decode(magic_phi(i, 10), 10) == i for i in range(10))


def test_tie_at_optimum_raises() -> None:
    with pytest.raises(TieAtOptimum):
        EnvModel.bandit([1.0, 1.0, 0.0])


@pytest.mark.parametrize(
    "kind, params",
    [
        pytest.param(GraphKind.LOOPY_STAR, (), id="loopy-star-defaults"),
        pytest.param(GraphKind.RING, (0.3,), id="ring"),
        pytest.param(GraphKind.LOOPLESS_CLIQUE, (0.5,), id="clique"),
    ],
)
def test_default_graph_is_a_probability_matrix(kind: GraphKind, params) -> None:
    graph = default_graph(kind, 5, params)

    assert graph.G.shape == (5, 5)
    assert np.all((graph.G >= 0.0) & (graph.G <= 1.0))


def test_loopless_clique_has_empty_diagonal() -> None:
    assert np.all(np.diag(default_graph(GraphKind.LOOPLESS_CLIQUE, 6).G) == 0.0)


@pytest.mark.parametrize(
    "K, params",
    [
        pytest.param(2, (), id="too-few-nodes"),
        pytest.param(5, (1.5,), id="not-a-probability"),
        pytest.param(5, (0.1, 0.2), id="wrong-arity"),
    ],
)
def test_default_graph_rejects_bad_parameters(K: int, params) -> None:
    with pytest.raises(BadGraphParams):
        default_graph(GraphKind.RING, K, params)


def test_feedback_graph_observation_reveals_subset() -> None:
    spec = make_prior("ring-small")
    env = sample_env(spec, RandomSource(0))
    h = History(initial=env.initial_observation(RandomSource(0)), n_arms=env.n_arms)

    x = env_step(env, h, 2, RandomSource(3))

    assert x.dim == spec.k
    assert not x.mask[2]  # rings never reveal the pulled node itself
    assert all(v == 0.0 for v, m in zip(x.values, x.mask) if not m)
    assert math.isfinite(env.log_density(h, 2, x))


def test_magic_room_exit_at_correct_door_is_terminal() -> None:
    """
    Test the Magic Room dynamics.

    Given a room instance:
    When the agent walks to the correct door and exits,
    Then the environment reports a terminal history.
    """
    spec = make_prior("magic-room-6")
    env = sample_env(spec, RandomSource(2))
    door_cell = {door: cell for cell, door in env.room.door_cells().items()}[env.room.door]
    rng = RandomSource(5)
    h = History(initial=env.initial_observation(rng), n_arms=env.n_arms)

    z, y = env.room.start
    moves = []
    moves += [RoomAction.RIGHT if door_cell[0] > z else RoomAction.LEFT] * abs(door_cell[0] - z)
    moves += [RoomAction.DOWN if door_cell[1] > y else RoomAction.UP] * abs(door_cell[1] - y)
    for a in moves:
        h = append(h, int(a), env_step(env, h, int(a), rng))
        assert not env.is_terminal(h)
    h = append(h, int(RoomAction.EXIT), env_step(env, h, int(RoomAction.EXIT), rng))

    assert env.is_terminal(h)


def test_magic_room_clues_cover_inner_subgrid() -> None:
    """
    Test where Magic Room clues are placed.

    Given 200 sampled rooms of size 6:
    When collecting their clue cells,
    Then every clue lies in rows and columns 1..5 off the start cell, and the last row or column is used.
    """
    spec = make_prior("magic-room-6")
    rooms = [sample_env(spec, RandomSource(i)).room for i in range(200)]
    cells = [cell for room in rooms for cell in room.clue_cells]

    assert all(1 <= z <= 5 and 1 <= y <= 5 for z, y in cells)
    assert all(cell != room.start for room in rooms for cell in room.clue_cells)
    assert all(room.clue_cells[0] != room.clue_cells[1] for room in rooms)
    assert any(z == 5 or y == 5 for z, y in cells)


def test_magic_room_walls_block_moves() -> None:
    spec = make_prior("magic-room-6")
    env = sample_env(spec, RandomSource(0))
    rng = RandomSource(1)
    h = History(initial=env.initial_observation(rng), n_arms=env.n_arms)
    for _ in range(10):
        h = append(h, int(RoomAction.UP), env_step(env, h, int(RoomAction.UP), rng))

    assert h.last_observation.values[1] == 0.0


def test_finite_prior_samples_support_models(two_model_det: PriorSpec) -> None:
    seen = {id(sample_env(two_model_det, RandomSource(i))) for i in range(40)}

    assert seen == {id(m) for m in two_model_det.support}


def test_spec_hash_depends_on_support(two_model_det: PriorSpec) -> None:
    continuous = PriorSpec(family=EnvFamily.DETERMINISTIC, k=2)

    assert two_model_det.spec_hash() != continuous.spec_hash()
    assert two_model_det.spec_hash() == make_prior("two-model-det").spec_hash()


def test_prior_rejects_inconsistent_fields() -> None:
    with pytest.raises(ValueError):
        PriorSpec(family=EnvFamily.MAGIC_CHAIN, k=3, n_magic=3)
    with pytest.raises(ValueError):
        PriorSpec(family=EnvFamily.DETERMINISTIC, k=3, mean_low=2.0, mean_high=1.0)


def test_unknown_preset_lists_known_names() -> None:
    with pytest.raises(UnknownPresetError, match="two-model-det"):
        make_prior("no-such-prior")


def test_initial_observation_is_shared_across_instances() -> None:
    spec = make_prior("gaussian-3")
    first = sample_env(spec, RandomSource(0)).initial_observation(RandomSource(0))
    second = sample_env(spec, RandomSource(1)).initial_observation(RandomSource(9))

    assert first == second == Observation.scalar(0.0)
