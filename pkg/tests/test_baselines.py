"""Tests for the comparison algorithms."""

import numpy as np
import pytest

from pure_explorer.baselines import (
    ApproxTrackAndStopPolicy,
    ArmStats,
    ExploreThenCommitPolicy,
    InformationDirectedPolicy,
    PosteriorGreedyPolicy,
    ThompsonPolicy,
    TopTwoPolicy,
    TrackAndStopPolicy,
    UCBPolicy,
    UniformPolicy,
    allocation_tv_trace,
    approx_tas_weights,
    best_arm_probabilities,
    cumulative_regret,
    d_tracking_select,
    glrt_statistic,
    glrt_stop,
    idpt_act,
    iids_select,
    tas_allocation,
)
from pure_explorer.core import FixedBudget, FixedConfidence, History, Observation, RandomSource, append, rollout
from pure_explorer.envs import EnvFamily, EnvModel, PriorSpec
from pure_explorer.posterior import PosteriorInference
from pure_explorer.utils.exceptions import DegenerateGapsError, HypothesisActionMismatch, UnpulledArmError


def _history(n_arms: int, pulls) -> History:
    h = History(initial=Observation.scalar(0.0), n_arms=n_arms)
    for a, value in pulls:
        h = append(h, a, Observation.scalar(value))
    return h


class _FixedInference:
    def __init__(self, probs) -> None:
        self.probs = np.asarray(probs, dtype=float)

    def predict_proba(self, history: History) -> np.ndarray:
        return self.probs


class _FixedQ:
    def __init__(self, values) -> None:
        self.values = np.asarray(values, dtype=float)

    def q_values(self, history: History) -> np.ndarray:
        return self.values


def test_arm_stats_from_history() -> None:
    stats = ArmStats.from_history(_history(3, [(0, 1.0), (0, 3.0), (2, 5.0)]))

    assert np.array_equal(stats.counts, [2, 0, 1])
    assert stats.t == 3
    assert stats.means[0] == 2.0
    assert np.isnan(stats.means[1])
    assert list(stats.unpulled()) == [1]


def test_arm_stats_reads_feedback_masks() -> None:
    h = History(initial=Observation((0.0, 0.0, 0.0), (False, False, False)), n_arms=3)
    h = append(h, 0, Observation.from_arrays([0.0, 2.0, 4.0], [False, True, True]))

    stats = ArmStats.from_history(h)

    assert np.array_equal(stats.counts, [0, 1, 1])
    assert stats.means[2] == 4.0


def test_tas_allocation_two_arms_is_balanced() -> None:
    assert np.allclose(tas_allocation([1.0, 0.0], 1.0), [0.5, 0.5])


def test_tas_allocation_favours_close_challengers() -> None:
    """
    Test the shape of the optimal proportions.

    Given one close and one distant challenger:
    When computing the allocation,
    Then it sums to one and samples the close challenger more than the distant one.
    """
    weights = tas_allocation([1.0, 0.9, 0.0], 1.0)

    assert weights.sum() == pytest.approx(1.0)
    assert weights[1] > weights[2]
    assert weights[0] > weights[2]


def test_tas_allocation_degenerate_gaps() -> None:
    with pytest.raises(DegenerateGapsError):
        tas_allocation([0.5, 0.5, 0.5], 1.0)


@pytest.mark.parametrize(
    "linear, expected",
    [
        pytest.param(True, [0.4, 0.4, 0.2], id="linear"),
        pytest.param(False, [4.0 / 9.0, 4.0 / 9.0, 1.0 / 9.0], id="squared"),
    ],
)
def test_approx_tas_weights(linear: bool, expected) -> None:
    assert np.allclose(approx_tas_weights([1.0, 0.8, 0.6], linear=linear), expected)


def test_d_tracking_forces_exploration() -> None:
    stats = ArmStats(counts=np.array([20.0, 0.0, 20.0]), sums=np.zeros(3), t=40)

    assert d_tracking_select(stats, np.array([0.5, 0.0, 0.5])) == 1


def test_d_tracking_follows_target() -> None:
    stats = ArmStats(counts=np.array([10.0, 5.0, 5.0]), sums=np.zeros(3), t=20)

    assert d_tracking_select(stats, np.array([0.2, 0.6, 0.2])) == 1


def test_glrt_needs_every_arm() -> None:
    with pytest.raises(UnpulledArmError):
        glrt_statistic(ArmStats.from_history(_history(2, [(0, 1.0)])), 1.0)


def test_glrt_stops_on_clear_evidence() -> None:
    pulls = [(0, 1.0)] * 50 + [(1, 0.0)] * 50
    stop, statistic, threshold = glrt_stop(ArmStats.from_history(_history(2, pulls)), 1.0, 0.05)

    assert stop
    assert statistic == pytest.approx(50 * 50 / 100 / 2.0)
    assert threshold < statistic


@pytest.mark.parametrize(
    "policy",
    [
        pytest.param(TrackAndStopPolicy(1.0, 0.05), id="tas"),
        pytest.param(ApproxTrackAndStopPolicy(1.0, 0.05), id="approx-tas"),
        pytest.param(TopTwoPolicy(1.0, 0.05), id="top-two"),
        pytest.param(UniformPolicy(1.0, 0.05), id="uniform"),
    ],
)
def test_stopping_baselines_identify_an_easy_instance(policy) -> None:
    """
    Test the GLRT-stopped baselines end to end.

    Given a well separated three-armed Gaussian instance:
    When each baseline runs in fixed-confidence mode,
    Then it stops before the horizon and names the best arm.
    """
    env = EnvModel.bandit([2.0, 0.0, -1.0], noise=1.0, family=EnvFamily.GAUSSIAN_MIN_GAP)

    result = rollout(env, policy, FixedConfidence(0.05, 500), RandomSource(3))

    assert result.history.stopped
    assert policy.recommend(result.history) == 0


def test_best_arm_probabilities_sum_to_one() -> None:
    stats = ArmStats(counts=np.array([10.0, 10.0, 10.0]), sums=np.array([10.0, 5.0, 0.0]), t=30)

    probs = best_arm_probabilities(stats, 1.0)

    assert probs.sum() == pytest.approx(1.0)
    assert np.argmax(probs) == 0
    assert probs[0] > probs[1] > probs[2]


def test_idpt_stops_when_confident() -> None:
    h = _history(3, [])

    assert idpt_act(_FixedInference([0.1, 0.7, 0.2]), h, 0.1) == 1
    assert idpt_act(_FixedInference([0.02, 0.95, 0.03]), h, 0.1) == h.stop_action


def test_idpt_requires_arm_hypotheses() -> None:
    with pytest.raises(HypothesisActionMismatch):
        idpt_act(_FixedInference([0.5, 0.5]), _history(3, []), None)


def test_iids_prefers_informative_query() -> None:
    """
    Test information-directed selection with the exact posterior.

    Given three Gaussian models that agree on arm 0 and differ on arm 1:
    When selecting a query,
    Then the policy picks arm 1.
    """
    spec = PriorSpec(family=EnvFamily.GAUSSIAN_MIN_GAP, k=3, sigma=0.5, min_gap=0.1)
    models = [
        EnvModel.bandit([0.5, 2.0, 0.0], 0.5, EnvFamily.GAUSSIAN_MIN_GAP),
        EnvModel.bandit([0.5, -1.0, 1.0], 0.5, EnvFamily.GAUSSIAN_MIN_GAP),
        EnvModel.bandit([0.5, 0.0, -1.0], 0.5, EnvFamily.GAUSSIAN_MIN_GAP),
    ]
    spec = spec.with_support(models)
    h = _history(3, [(0, 0.5), (1, 0.5), (2, 0.0)])

    assert iids_select(PosteriorInference(spec), h, sigma=1.5) == 1


def test_information_directed_policy_stops(two_model_det: PriorSpec) -> None:
    policy = InformationDirectedPolicy(PosteriorInference(two_model_det), sigma=0.5, delta=0.1)
    h = _history(2, [(0, 1.0)])

    assert policy.act(h, RandomSource(0)) == h.stop_action
    assert policy.recommend(h) == 0


def test_posterior_greedy_policy_on_finite_prior(two_model_det: PriorSpec) -> None:
    policy = PosteriorGreedyPolicy(PosteriorInference(two_model_det), delta=0.1)
    env = two_model_det.support[1]

    result = rollout(env, policy, FixedConfidence(0.1, 5), RandomSource(0))

    assert result.history.stopped
    assert policy.recommend(result.history) == 1


def test_explore_then_commit_keeps_the_identified_arm() -> None:
    policy = ExploreThenCommitPolicy(_FixedQ([0.1, 0.2, 0.9]), _FixedInference([0.1, 0.8, 0.1]))
    env = EnvModel.bandit([0.0, 1.0])

    result = rollout(env, policy, FixedBudget(4), RandomSource(0))

    assert result.history.actions == (1, 1, 1, 1)


@pytest.mark.parametrize(
    "policy",
    [pytest.param(UCBPolicy(1.0), id="ucb"), pytest.param(ThompsonPolicy(1.0), id="thompson")],
)
def test_regret_baselines_concentrate_on_best_arm(policy) -> None:
    env = EnvModel.bandit([0.0, 0.5, 3.0], noise=1.0, family=EnvFamily.GAUSSIAN_MIN_GAP)

    result = rollout(env, policy, FixedBudget(200), RandomSource(1))
    regret = cumulative_regret(env.means, result.history.actions)

    assert result.history.actions.count(2) > 150
    assert np.all(np.diff(regret) >= 0.0)
    assert policy.recommend(result.history) == 2


def test_cumulative_regret() -> None:
    assert np.allclose(cumulative_regret([0.0, 1.0], [0, 1, 0]), [1.0, 1.0, 2.0])


def test_allocation_tv_trace_marks_unexplored_steps() -> None:
    h = _history(3, [(0, 1.0), (1, 0.5), (2, 0.0), (0, 1.2)])

    trace = allocation_tv_trace(h, 1.0)

    assert np.isnan(trace[:2]).all()
    assert np.all((trace[2:] >= 0.0) & (trace[2:] <= 1.0))
