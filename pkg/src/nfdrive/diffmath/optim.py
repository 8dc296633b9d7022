"""Adaptive-moment optimizer with global gradient-norm clipping."""

from __future__ import annotations

import numpy as np

from .params import ParamSet
from .tensor import DiffError


class Adam:
    """Adam over a (sub)group of a ParamSet.  Deterministic given state."""

    def __init__(self, params: ParamSet, lr: float, group: str | None = None,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
                 clip_norm: float = 100.0):
        self.params = params
        self.names = params.names(group)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.clip_norm = clip_norm
        self.t = 0
        self.m = {n: np.zeros_like(params[n].data) for n in self.names}
        self.v = {n: np.zeros_like(params[n].data) for n in self.names}

    def step(self, grads: dict[str, np.ndarray]) -> None:
        for n in self.names:
            if n not in grads:
                raise DiffError(f"missing gradient for parameter {n}")
        total_sq = sum(float(np.sum(grads[n] ** 2)) for n in self.names)
        scale = 1.0
        norm = np.sqrt(total_sq)
        if self.clip_norm is not None and norm > self.clip_norm:
            scale = self.clip_norm / norm
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for n in self.names:
            g = grads[n] * scale
            self.m[n] = self.beta1 * self.m[n] + (1.0 - self.beta1) * g
            self.v[n] = self.beta2 * self.v[n] + (1.0 - self.beta2) * g * g
            m_hat = self.m[n] / bc1
            v_hat = self.v[n] / bc2
            self.params[n].data = self.params[n].data - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def state_dict(self) -> dict:
        return {"t": self.t,
                "m": {n: v.copy() for n, v in self.m.items()},
                "v": {n: v.copy() for n, v in self.v.items()}}

    def load_state_dict(self, state: dict) -> None:
        self.t = int(state["t"])
        for n in self.names:
            self.m[n] = np.asarray(state["m"][n], dtype=np.float64).copy()
            self.v[n] = np.asarray(state["v"][n], dtype=np.float64).copy()
