"""
Causal sequence models over histories, with hand-written backpropagation.

A history ``(x_1, a_1, ..., x_t)`` becomes ``t`` tokens: token ``s`` holds the observation values, the
observation mask and the one-hot of the action that produced it (zeros for the initial observation). Tokens are
embedded through a gelu layer, summed with a learned positional vector and passed through pre-norm attention
blocks. Only the hidden state of the last real token feeds the output head; padding sits after it and is never
attended to thanks to the causal mask.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import log_softmax, softmax

from pure_explorer.config import LAYER_NORM_EPS
from pure_explorer.core import History, RandomSource
from pure_explorer.schemas.training_schema import ModelConfig

Params = Dict[str, np.ndarray]

_GELU_C = math.sqrt(2.0 / math.pi)
_GELU_A = 0.044715


def gelu(x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Tanh approximation of gelu; also returns the tanh term needed by :func:`gelu_backward`."""
    t = np.tanh(_GELU_C * (x + _GELU_A * x**3))
    return 0.5 * x * (1.0 + t), t


def gelu_backward(dy: np.ndarray, x: np.ndarray, t: np.ndarray) -> np.ndarray:
    dt = (1.0 - t**2) * _GELU_C * (1.0 + 3.0 * _GELU_A * x**2)
    return dy * (0.5 * (1.0 + t) + 0.5 * x * dt)


def layer_norm(x: np.ndarray, g: np.ndarray, b: np.ndarray) -> Tuple[np.ndarray, tuple]:
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    inv = 1.0 / np.sqrt((xc**2).mean(axis=-1, keepdims=True) + LAYER_NORM_EPS)
    xh = xc * inv
    return xh * g + b, (xh, inv, g)


def layer_norm_backward(dy: np.ndarray, cache: tuple) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    xh, inv, g = cache
    D = xh.shape[-1]
    dxh = dy * g
    dg = (dy * xh).reshape(-1, D).sum(axis=0)
    db = dy.reshape(-1, D).sum(axis=0)
    dx = inv / D * (D * dxh - dxh.sum(axis=-1, keepdims=True) - xh * (dxh * xh).sum(axis=-1, keepdims=True))
    return dx, dg, db


def lecun_init(shape: Tuple[int, ...], fan_in: int, rng: RandomSource) -> np.ndarray:
    limit = math.sqrt(1.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape)


@dataclass(frozen=True)
class TokenEncoder:
    """Turns histories into padded token batches."""

    n_arms: int
    obs_dim: int

    @property
    def token_dim(self) -> int:
        return 2 * self.obs_dim + self.n_arms

    def encode(self, history: History) -> np.ndarray:
        d = self.obs_dim
        tokens = np.zeros((history.t, self.token_dim))
        for s, x in enumerate(history.observations):
            tokens[s, :d] = x.as_array()
            tokens[s, d : 2 * d] = x.mask_array()
        for s, a in enumerate(history.actions, start=1):
            tokens[s, 2 * d + a] = 1.0
        return tokens

    def batch(self, histories: Sequence[History]) -> Tuple[np.ndarray, np.ndarray]:
        """Tokens of shape ``(B, S, token_dim)`` padded at the end, and the real lengths."""
        encoded = [self.encode(h) for h in histories]
        lengths = np.array([len(e) for e in encoded])
        tokens = np.zeros((len(encoded), int(lengths.max()), self.token_dim))
        for i, e in enumerate(encoded):
            tokens[i, : len(e)] = e
        return tokens, lengths


class SequenceModel:
    """
    Pre-norm causal transformer with one output vector per sequence, taken at its last real position.

    Parameters live in a flat ``params`` dict so that optimizers and checkpoints can treat them uniformly.
    """

    def __init__(
        self,
        input_dim: int,
        output_dim: int,
        config: ModelConfig,
        rng: Optional[RandomSource] = None,
    ) -> None:
        self.input_dim = input_dim
        self.output_dim = output_dim
        self.config = config
        self.params: Params = {}
        if rng is not None:
            self._init_params(rng)

    def _init_params(self, rng: RandomSource) -> None:
        d, ff = self.config.d_model, self.config.ff_dim
        p = self.params
        p["embed.W"] = lecun_init((self.input_dim, d), self.input_dim, rng)
        p["embed.b"] = np.zeros(d)
        p["pos"] = rng.normal(0.0, 0.02, size=(self.config.max_len, d))
        for l in range(self.config.n_layers):
            pre = f"block{l}."
            p[pre + "ln1.g"], p[pre + "ln1.b"] = np.ones(d), np.zeros(d)
            for name in ("Wq", "Wk", "Wv", "Wo"):
                p[pre + "attn." + name] = lecun_init((d, d), d, rng)
            p[pre + "ln2.g"], p[pre + "ln2.b"] = np.ones(d), np.zeros(d)
            p[pre + "ffn.W1"] = lecun_init((d, ff), d, rng)
            p[pre + "ffn.b1"] = np.zeros(ff)
            p[pre + "ffn.W2"] = lecun_init((ff, d), ff, rng)
            p[pre + "ffn.b2"] = np.zeros(d)
        p["ln_f.g"], p["ln_f.b"] = np.ones(d), np.zeros(d)
        p["head.W"] = lecun_init((d, self.output_dim), d, rng)
        p["head.b"] = np.zeros(self.output_dim)

    def clone(self) -> SequenceModel:
        other = SequenceModel(self.input_dim, self.output_dim, self.config)
        other.params = {name: value.copy() for name, value in self.params.items()}
        return other

    # Forward

    def forward(
        self,
        tokens: np.ndarray,
        lengths: np.ndarray,
        training: bool = False,
        rng: Optional[RandomSource] = None,
    ) -> Tuple[np.ndarray, Dict[str, Any]]:
        """
        Run the model on a padded batch.

        Parameters
        ----------
        tokens : np.ndarray
            Shape ``(B, S, input_dim)``.
        lengths : np.ndarray
            Real length of each sequence; the output is read at position ``length - 1``.
        training : bool
            Enables dropout (needs ``rng``).
        rng : RandomSource, optional
            Stream for dropout masks.

        Returns
        -------
        Tuple[np.ndarray, Dict[str, Any]]
            Outputs of shape ``(B, output_dim)`` and the cache consumed by :meth:`backward`.
        """
        p = self.params
        B, S, _ = tokens.shape
        if S > self.config.max_len:
            raise ValueError(f"History of length {S} exceeds the positional table ({self.config.max_len})")
        drop = self.config.dropout if training else 0.0
        if drop > 0.0 and rng is None:
            raise ValueError("Dropout during training needs a random source")

        pre = tokens @ p["embed.W"] + p["embed.b"]
        emb, t_emb = gelu(pre)
        x = emb + p["pos"][:S]
        mask = np.triu(np.ones((S, S), dtype=bool), k=1)

        layers: List[Dict[str, Any]] = []
        for l in range(self.config.n_layers):
            c: Dict[str, Any] = {}
            h1, c["ln1"] = layer_norm(x, p[f"block{l}.ln1.g"], p[f"block{l}.ln1.b"])
            attn, c["attn"] = self._attention(l, h1, mask)
            attn, c["drop1"] = _dropout(attn, drop, rng)
            x = x + attn
            h2, c["ln2"] = layer_norm(x, p[f"block{l}.ln2.g"], p[f"block{l}.ln2.b"])
            z = h2 @ p[f"block{l}.ffn.W1"] + p[f"block{l}.ffn.b1"]
            f, tf = gelu(z)
            ffn = f @ p[f"block{l}.ffn.W2"] + p[f"block{l}.ffn.b2"]
            ffn, c["drop2"] = _dropout(ffn, drop, rng)
            x = x + ffn
            c.update(h2=h2, z=z, f=f, tf=tf)
            layers.append(c)

        idx = np.asarray(lengths) - 1
        last = x[np.arange(B), idx]
        hf, ln_f = layer_norm(last, p["ln_f.g"], p["ln_f.b"])
        out = hf @ p["head.W"] + p["head.b"]
        cache = {"tokens": tokens, "pre": pre, "t_emb": t_emb, "layers": layers, "idx": idx, "ln_f": ln_f, "hf": hf}
        return out, cache

    def _attention(self, l: int, h: np.ndarray, mask: np.ndarray) -> Tuple[np.ndarray, tuple]:
        p = self.params
        B, S, d = h.shape
        H = self.config.n_heads
        hd = d // H
        split = lambda m: m.reshape(B, S, H, hd).transpose(0, 2, 1, 3)  # noqa: E731
        Q = split(h @ p[f"block{l}.attn.Wq"])
        K = split(h @ p[f"block{l}.attn.Wk"])
        V = split(h @ p[f"block{l}.attn.Wv"])
        scores = (Q @ K.transpose(0, 1, 3, 2)) / math.sqrt(hd)
        scores = np.where(mask, -np.inf, scores)
        P = softmax(scores, axis=-1)
        A = (P @ V).transpose(0, 2, 1, 3).reshape(B, S, d)
        return A @ p[f"block{l}.attn.Wo"], (h, Q, K, V, P, A)

    # Backward

    def backward(self, cache: Dict[str, Any], d_out: np.ndarray) -> Params:
        """Gradients of ``sum(d_out * out)`` with respect to every parameter."""
        p = self.params
        grads = {name: np.zeros_like(value) for name, value in p.items()}
        tokens = cache["tokens"]
        B, S, _ = tokens.shape
        d = self.config.d_model

        grads["head.W"] = cache["hf"].T @ d_out
        grads["head.b"] = d_out.sum(axis=0)
        d_last, grads["ln_f.g"], grads["ln_f.b"] = layer_norm_backward(d_out @ p["head.W"].T, cache["ln_f"])
        dx = np.zeros((B, S, d))
        dx[np.arange(B), cache["idx"]] = d_last

        for l in reversed(range(self.config.n_layers)):
            c = cache["layers"][l]
            pre = f"block{l}."
            dffn = _dropout_backward(dx, c["drop2"])
            ff = c["f"].shape[-1]
            grads[pre + "ffn.W2"] = c["f"].reshape(-1, ff).T @ dffn.reshape(-1, d)
            grads[pre + "ffn.b2"] = dffn.sum(axis=(0, 1))
            dz = gelu_backward(dffn @ p[pre + "ffn.W2"].T, c["z"], c["tf"])
            grads[pre + "ffn.W1"] = c["h2"].reshape(-1, d).T @ dz.reshape(-1, ff)
            grads[pre + "ffn.b1"] = dz.sum(axis=(0, 1))
            dx_mid, grads[pre + "ln2.g"], grads[pre + "ln2.b"] = layer_norm_backward(
                dz @ p[pre + "ffn.W1"].T, c["ln2"]
            )
            dx = dx + dx_mid

            dattn = _dropout_backward(dx, c["drop1"])
            dh1 = self._attention_backward(l, dattn, c["attn"], grads)
            dx_in, grads[pre + "ln1.g"], grads[pre + "ln1.b"] = layer_norm_backward(dh1, c["ln1"])
            dx = dx + dx_in

        grads["pos"][:S] = dx.sum(axis=0)
        dpre = gelu_backward(dx, cache["pre"], cache["t_emb"])
        grads["embed.W"] = tokens.reshape(-1, tokens.shape[-1]).T @ dpre.reshape(-1, d)
        grads["embed.b"] = dpre.sum(axis=(0, 1))
        return grads

    def _attention_backward(self, l: int, dout: np.ndarray, cache: tuple, grads: Params) -> np.ndarray:
        p = self.params
        h, Q, K, V, P, A = cache
        B, S, d = h.shape
        H = self.config.n_heads
        hd = d // H
        pre = f"block{l}.attn."
        split = lambda m: m.reshape(B, S, H, hd).transpose(0, 2, 1, 3)  # noqa: E731
        merge = lambda m: m.transpose(0, 2, 1, 3).reshape(B, S, d)  # noqa: E731

        grads[pre + "Wo"] = A.reshape(-1, d).T @ dout.reshape(-1, d)
        dA = split(dout @ p[pre + "Wo"].T)
        dP = dA @ V.transpose(0, 1, 3, 2)
        dV = P.transpose(0, 1, 3, 2) @ dA
        dS = P * (dP - (dP * P).sum(axis=-1, keepdims=True)) / math.sqrt(hd)
        dQ = merge(dS @ K)
        dK = merge(dS.transpose(0, 1, 3, 2) @ Q)
        dV = merge(dV)

        h2d = h.reshape(-1, d)
        grads[pre + "Wq"] = h2d.T @ dQ.reshape(-1, d)
        grads[pre + "Wk"] = h2d.T @ dK.reshape(-1, d)
        grads[pre + "Wv"] = h2d.T @ dV.reshape(-1, d)
        return dQ @ p[pre + "Wq"].T + dK @ p[pre + "Wk"].T + dV @ p[pre + "Wv"].T


def _dropout(x: np.ndarray, rate: float, rng: Optional[RandomSource]) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    if rate <= 0.0:
        return x, None
    keep = 1.0 - rate
    mask = (rng.random(x.shape) < keep) / keep
    return x * mask, mask


def _dropout_backward(dy: np.ndarray, mask: Optional[np.ndarray]) -> np.ndarray:
    return dy if mask is None else dy * mask


class HistoryNetwork:
    """A :class:`SequenceModel` that reads histories directly."""

    def __init__(self, encoder: TokenEncoder, model: SequenceModel) -> None:
        self.encoder = encoder
        self.model = model

    @property
    def params(self) -> Params:
        return self.model.params

    def forward(
        self, histories: Sequence[History], training: bool = False, rng: Optional[RandomSource] = None
    ) -> Tuple[np.ndarray, Dict[str, Any]]:
        tokens, lengths = self.encoder.batch(histories)
        return self.model.forward(tokens, lengths, training=training, rng=rng)

    def backward(self, cache: Dict[str, Any], d_out: np.ndarray) -> Params:
        return self.model.backward(cache, d_out)

    def outputs(self, histories: Sequence[History]) -> np.ndarray:
        return self.forward(histories)[0]

    def clone(self):
        return type(self)(self.encoder, self.model.clone())


class InferenceNet(HistoryNetwork):
    """Logits over hypotheses; ``log_softmax`` of the output approximates the posterior."""

    @classmethod
    def build(cls, encoder: TokenEncoder, n_hypotheses: int, config: ModelConfig, rng: RandomSource) -> InferenceNet:
        return cls(encoder, SequenceModel(encoder.token_dim, n_hypotheses, config, rng))

    def log_proba(self, histories: Sequence[History]) -> np.ndarray:
        return log_softmax(self.outputs(histories), axis=-1)

    def predict_proba(self, history: History) -> np.ndarray:
        return np.exp(self.log_proba([history])[0])


class QNet(HistoryNetwork):
    """Action values for the ``K`` queries, plus the stop action when stopping is allowed."""

    @classmethod
    def build(cls, encoder: TokenEncoder, with_stop: bool, config: ModelConfig, rng: RandomSource) -> QNet:
        n_actions = encoder.n_arms + int(with_stop)
        return cls(encoder, SequenceModel(encoder.token_dim, n_actions, config, rng))

    @property
    def with_stop(self) -> bool:
        return self.model.output_dim > self.encoder.n_arms

    def q_values(self, history: History) -> np.ndarray:
        return self.outputs([history])[0]
