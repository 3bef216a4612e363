"""Tests for linear fitted-Q iteration on finite priors."""

import warnings

import numpy as np
import pytest

from pure_explorer.core import RandomSource
from pure_explorer.envs import PriorSpec
from pure_explorer.learner.fitted_q import (
    constant_features,
    evaluate_fitted,
    fitted_q_linear,
    one_hot_features,
    value_gap,
)
from pure_explorer.utils.exceptions import SingularRegression


def test_one_hot_features_recover_exact_values(one_hot_models: PriorSpec) -> None:
    """
    Test that tabular features reproduce backward induction.

    Given three one-hot deterministic models, a budget of 2 and indicator features:
    When fitting with large batches,
    Then every first query is worth 1, repeating a silent arm is worth 1/2 and the greedy policy is optimal.
    """
    with warnings.catch_warnings():
        warnings.simplefilter("error", SingularRegression)
        fitted = fitted_q_linear(
            one_hot_models, 2, one_hot_features(3, 2, 2), epochs=2, batch_size=500, rng=RandomSource(0)
        )

    assert np.allclose(fitted.q_values(()), 1.0, atol=1e-2)
    silent_arm_0 = ((0, 0),)
    assert fitted.q(silent_arm_0, 0) == pytest.approx(0.5, abs=1e-2)
    assert fitted.q(silent_arm_0, 1) == pytest.approx(1.0, abs=1e-2)
    assert evaluate_fitted(fitted, one_hot_models) == pytest.approx(1.0)
    assert value_gap(fitted, one_hot_models) == pytest.approx(0.0, abs=1e-12)


def test_constant_features_repeat_the_first_arm(one_hot_models: PriorSpec) -> None:
    """
    Test the weakest feature map.

    Given a single constant feature:
    When fitting and acting greedily,
    Then every action ties, arm 0 is pulled twice and the answer is right with probability 2/3.
    """
    fitted = fitted_q_linear(one_hot_models, 2, constant_features, epochs=1, batch_size=200, rng=RandomSource(0))

    assert evaluate_fitted(fitted, one_hot_models) == pytest.approx(2.0 / 3.0)
    assert value_gap(fitted, one_hot_models) == pytest.approx(1.0 / 3.0)


def test_rank_deficient_design_warns(one_hot_models: PriorSpec) -> None:
    with pytest.warns(SingularRegression):
        fitted_q_linear(one_hot_models, 1, lambda key, a: np.ones(2), epochs=1, batch_size=20)


def test_budget_must_be_positive(one_hot_models: PriorSpec) -> None:
    with pytest.raises(ValueError):
        fitted_q_linear(one_hot_models, 0, constant_features)
