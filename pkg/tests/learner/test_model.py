"""Tests for the token encoder and the causal sequence model."""

import numpy as np
import pytest

from pure_explorer.core import History, Observation, RandomSource, append
from pure_explorer.learner.model import InferenceNet, QNet, SequenceModel, TokenEncoder
from pure_explorer.schemas import ModelConfig


def _history(pulls) -> History:
    h = History(initial=Observation.scalar(0.0), n_arms=2)
    for a, value in pulls:
        h = append(h, a, Observation.scalar(value))
    return h


def test_token_encoder_layout() -> None:
    encoder = TokenEncoder(n_arms=2, obs_dim=1)

    tokens = encoder.encode(_history([(1, 0.5), (0, -1.0)]))

    assert encoder.token_dim == 4
    assert tokens.shape == (3, 4)
    assert np.array_equal(tokens[0], [0.0, 1.0, 0.0, 0.0])
    assert np.array_equal(tokens[1], [0.5, 1.0, 0.0, 1.0])
    assert np.array_equal(tokens[2], [-1.0, 1.0, 1.0, 0.0])


def test_token_encoder_pads_batches() -> None:
    encoder = TokenEncoder(n_arms=2, obs_dim=1)

    tokens, lengths = encoder.batch([_history([]), _history([(0, 1.0), (1, 1.0)])])

    assert tokens.shape == (2, 3, 4)
    assert list(lengths) == [1, 3]
    assert not tokens[0, 1:].any()


def test_backward_matches_finite_differences(tiny_model: ModelConfig) -> None:
    """
    Test the hand-written gradients.

    Given a tiny model, a padded batch and a fixed linear readout of the outputs:
    When perturbing a few entries of every parameter,
    Then the central differences agree with ``backward``.
    """
    rng = RandomSource(0)
    model = SequenceModel(5, 3, tiny_model, rng.child(0))
    tokens = rng.child(1).normal(size=(2, 4, 5))
    lengths = np.array([4, 2])
    weights = rng.child(2).normal(size=(2, 3))

    out, cache = model.forward(tokens, lengths)
    grads = model.backward(cache, weights)

    def objective() -> float:
        return float(np.sum(weights * model.forward(tokens, lengths)[0]))

    picker = rng.child(3)
    eps = 1e-6
    for name, param in model.params.items():
        for _ in range(3):
            idx = tuple(int(picker.integers(n)) for n in param.shape)
            if name == "pos":
                idx = (int(picker.integers(4)),) + idx[1:]
            saved = param[idx]
            param[idx] = saved + eps
            up = objective()
            param[idx] = saved - eps
            down = objective()
            param[idx] = saved
            assert grads[name][idx] == pytest.approx((up - down) / (2 * eps), rel=1e-4, abs=1e-7), name
    assert out.shape == (2, 3)


def test_padding_does_not_leak_into_outputs(tiny_model: ModelConfig) -> None:
    """
    Test causality.

    Given a short sequence batched with a longer one:
    When reading the short sequence's output,
    Then it equals the output of the short sequence alone.
    """
    rng = RandomSource(1)
    model = SequenceModel(5, 3, tiny_model, rng.child(0))
    long = rng.child(1).normal(size=(1, 5, 5))
    short = long[:, :2]

    alone, _ = model.forward(short, np.array([2]))
    padded = np.concatenate([long, long], axis=0)
    batched, _ = model.forward(padded, np.array([2, 5]))

    assert np.allclose(batched[0], alone[0])


def test_forward_rejects_long_histories(tiny_model: ModelConfig) -> None:
    model = SequenceModel(5, 3, tiny_model, RandomSource(0))

    with pytest.raises(ValueError, match="positional table"):
        model.forward(np.zeros((1, 9, 5)), np.array([9]))


def test_dropout_needs_random_source() -> None:
    config = ModelConfig(d_model=8, n_layers=1, n_heads=2, dropout=0.5, max_len=4)
    model = SequenceModel(5, 3, config, RandomSource(0))
    tokens = np.ones((1, 2, 5))

    with pytest.raises(ValueError, match="random source"):
        model.forward(tokens, np.array([2]), training=True)
    out, _ = model.forward(tokens, np.array([2]), training=True, rng=RandomSource(1))
    assert np.isfinite(out).all()


def test_clone_is_independent(tiny_model: ModelConfig) -> None:
    model = SequenceModel(5, 3, tiny_model, RandomSource(0))
    other = model.clone()

    other.params["head.b"] += 1.0

    assert not np.array_equal(model.params["head.b"], other.params["head.b"])


def test_network_heads(tiny_model: ModelConfig) -> None:
    encoder = TokenEncoder(n_arms=2, obs_dim=1)
    infer = InferenceNet.build(encoder, 3, tiny_model, RandomSource(0))
    q_stop = QNet.build(encoder, True, tiny_model, RandomSource(1))
    q_budget = QNet.build(encoder, False, tiny_model, RandomSource(2))
    h = _history([(0, 1.0)])

    assert infer.predict_proba(h).sum() == pytest.approx(1.0)
    assert q_stop.with_stop and q_stop.q_values(h).shape == (3,)
    assert not q_budget.with_stop and q_budget.q_values(h).shape == (2,)
