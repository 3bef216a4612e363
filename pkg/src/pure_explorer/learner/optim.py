"""Adam over flat parameter dicts."""

from __future__ import annotations

from typing import Dict, Optional

import numpy as np

Params = Dict[str, np.ndarray]


def global_norm(grads: Params) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))


class Adam:
    """
    Adam with bias-corrected moments and optional global-norm clipping.

    Parameters
    ----------
    params : Dict[str, np.ndarray]
        Parameters to update in place; the moment dicts mirror its keys.
    lr : float
        Step size.
    beta1, beta2 : float
        Decay rates of the first and second moments.
    eps : float
        Denominator offset.
    clip_norm : float, optional
        Gradients are rescaled so that their global norm is at most this value.
    """

    def __init__(
        self,
        params: Params,
        lr: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        clip_norm: Optional[float] = None,
    ) -> None:
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.clip_norm = clip_norm
        self.m = {name: np.zeros_like(value) for name, value in params.items()}
        self.v = {name: np.zeros_like(value) for name, value in params.items()}
        self.t = 0

    def step(self, grads: Params) -> float:
        """Apply one update and return the gradient norm before clipping."""
        norm = global_norm(grads)
        scale = 1.0
        if self.clip_norm is not None and norm > self.clip_norm:
            scale = self.clip_norm / (norm + 1e-12)

        self.t += 1
        for name, param in self.params.items():
            g = grads[name] * scale
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * g * g
            m_hat = self.m[name] / (1.0 - self.beta1**self.t)
            v_hat = self.v[name] / (1.0 - self.beta2**self.t)
            param -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
        return norm

    def state_dict(self) -> Dict[str, np.ndarray]:
        state = {f"m/{name}": value for name, value in self.m.items()}
        state.update({f"v/{name}": value for name, value in self.v.items()})
        state["t"] = np.array(self.t)
        return state

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        for name in self.params:
            self.m[name] = np.array(state[f"m/{name}"], dtype=float)
            self.v[name] = np.array(state[f"v/{name}"], dtype=float)
        self.t = int(state["t"])
