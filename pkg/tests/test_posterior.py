"""Tests for exact posteriors, observation grids and prior discretization."""

import numpy as np
import pytest

from pure_explorer.core import History, Observation, RandomSource, append
from pure_explorer.envs import EnvFamily, PriorSpec, make_prior
from pure_explorer.posterior import (
    ObservationGrid,
    PosteriorInference,
    discretize_prior,
    map_hypothesis,
    posterior_predictive,
    posterior_update,
    prior_state,
)
from pure_explorer.utils.exceptions import (
    EmptyGridError,
    NotFiniteSupportError,
    UnsupportedFamilyError,
    ZeroLikelihoodEverywhere,
)


def _scalar_history(n_arms: int, steps) -> History:
    h = History(initial=Observation.scalar(0.0), n_arms=n_arms)
    for a, value in steps:
        h = append(h, a, Observation.scalar(value))
    return h


def test_prior_state_matches_weights(three_model_gauss: PriorSpec) -> None:
    state = prior_state(three_model_gauss)

    assert np.allclose(state.model_weights, 1.0 / 3.0)
    assert np.allclose(state.hyp_probs, [2.0 / 3.0, 1.0 / 3.0])


def test_deterministic_observation_identifies_model(two_model_det: PriorSpec) -> None:
    """
    Test that a noiseless observation collapses the posterior.

    Given the two-model deterministic prior:
    When arm 0 returns 1,
    Then hypothesis 0 has posterior probability 1.
    """
    state = posterior_update(two_model_det, _scalar_history(2, [(0, 1.0)]))

    assert map_hypothesis(state) == (0, 1.0)


def test_impossible_history_raises(two_model_det: PriorSpec) -> None:
    with pytest.raises(ZeroLikelihoodEverywhere):
        posterior_update(two_model_det, _scalar_history(2, [(0, 0.5)]))


def test_gaussian_posterior_is_bayes_rule(three_model_gauss: PriorSpec) -> None:
    """
    Test the Gaussian likelihood update against a direct computation.

    Given the three-model Gaussian prior:
    When arm 0 returns 0.7,
    Then the model weights are proportional to the Gaussian densities of 0.7 around each model's mean.
    """
    state = posterior_update(three_model_gauss, _scalar_history(2, [(0, 0.7)]))

    means = np.array([0.6, 0.0, 0.9])
    density = np.exp(-((0.7 - means) ** 2) / (2 * 0.25))
    assert np.allclose(state.model_weights, density / density.sum())


def test_posterior_is_order_invariant_for_static_families(three_model_gauss: PriorSpec) -> None:
    first = posterior_update(three_model_gauss, _scalar_history(2, [(0, 0.2), (1, 0.8)]))
    second = posterior_update(three_model_gauss, _scalar_history(2, [(1, 0.8), (0, 0.2)]))

    assert np.allclose(first.hyp_probs, second.hyp_probs)


def test_continuous_prior_needs_discretization() -> None:
    with pytest.raises(NotFiniteSupportError):
        prior_state(make_prior("gaussian-3"))


def test_interval_grid_folds_tails() -> None:
    grid = ObservationGrid.intervals(0.0, 1.0, 4)

    assert grid.n_cells == 4
    assert grid.cell_of(-5.0) == 0
    assert grid.cell_of(5.0) == 3
    assert grid.cell_of(0.3) == 1
    assert np.isclose(grid.cell_probabilities(0.5, 0.2).sum(), 1.0)


def test_atom_grid_maps_to_nearest_point() -> None:
    grid = ObservationGrid.atoms([0.0, 1.0, -1.0])

    assert grid.n_cells == 3
    assert grid.representatives[grid.cell_of(0.9)] == 1.0
    assert np.array_equal(grid.cell_probabilities(-1.0, 0.0), [1.0, 0.0, 0.0])


def test_empty_grid_raises() -> None:
    with pytest.raises(EmptyGridError):
        ObservationGrid.atoms([])


def test_grid_for_noiseless_prior_uses_atoms(two_model_det: PriorSpec) -> None:
    grid = ObservationGrid.for_prior(two_model_det)

    assert not grid.is_intervals
    assert list(grid.points) == [0.0, 1.0]


def test_posterior_predictive_sums_to_one(three_model_gauss: PriorSpec) -> None:
    grid = ObservationGrid.for_prior(three_model_gauss, 16)
    h = _scalar_history(2, [(0, 0.5)])

    predictive = posterior_predictive(three_model_gauss, h, 1, grid)

    assert predictive.shape == (16,)
    assert np.isclose(predictive.sum(), 1.0)


def test_posterior_inference_interface(two_model_det: PriorSpec) -> None:
    infer = PosteriorInference(two_model_det)

    assert np.allclose(infer.predict_proba(_scalar_history(2, [])), [0.5, 0.5])
    assert np.allclose(infer.predict_proba(_scalar_history(2, [(1, 1.0)])), [0.0, 1.0])


@pytest.mark.parametrize("method", [pytest.param("iid", id="iid"), pytest.param("lattice", id="lattice")])
def test_discretize_prior_respects_invariants(method: str) -> None:
    """
    Test that discretized priors keep the family's invariants.

    Given a Gaussian min-gap prior over three arms:
    When it is discretized,
    Then every support model has a unique best arm separated by at least the minimum gap.
    """
    spec = PriorSpec(family=EnvFamily.GAUSSIAN_MIN_GAP, k=3, min_gap=0.2)

    finite = discretize_prior(spec, 5, RandomSource(0), method=method)

    assert finite.is_finite
    assert len(finite.support) >= 2
    assert np.isclose(sum(finite.weights), 1.0)
    for model in finite.support:
        top_two = np.sort(model.means)[-2:]
        assert top_two[1] - top_two[0] >= 0.2 - 1e-12


def test_discretize_rejects_unsupported_family() -> None:
    with pytest.raises(UnsupportedFamilyError):
        discretize_prior(make_prior("ring-small"), 3, RandomSource(0))


@pytest.mark.parametrize(
    "prior, n_cells, steps",
    [
        pytest.param("one_hot_models", None, [(0, 0.0)], id="one-hot-atoms"),
        pytest.param("three_model_gauss", 8, [(0, 0.5)], id="gridded-gaussian"),
        pytest.param("three_model_gauss", 12, [(1, 0.2), (0, 0.9)], id="gridded-gaussian-two-steps"),
    ],
)
def test_expected_next_posterior_is_current_posterior(
    request: pytest.FixtureRequest, prior: str, n_cells, steps
) -> None:
    """
    Test that hypothesis probabilities form a martingale under the predictive law.

    Given a prior with finitely many observation cells and a history:
    When averaging the posterior after one more query over the predictive distribution of its cell,
    Then the average equals the current posterior for every query.
    """
    spec: PriorSpec = request.getfixturevalue(prior)
    grid = ObservationGrid.for_prior(spec) if n_cells is None else ObservationGrid.for_prior(spec, n_cells)
    h = _scalar_history(spec.k, steps)
    current = posterior_update(spec, h, grid).hyp_probs

    for a in range(spec.k):
        predictive = posterior_predictive(spec, h, a, grid)
        expected = np.zeros_like(current)
        for cell, p in enumerate(predictive):
            if p == 0.0:
                continue
            nxt = append(h, a, Observation.scalar(float(grid.representatives[cell])))
            expected += p * posterior_update(spec, nxt, grid).hyp_probs
        assert np.allclose(expected, current, rtol=0.0, atol=1e-9)
