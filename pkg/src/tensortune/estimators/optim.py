"""Adaptive-moment gradient updates shared by the network estimators."""

from __future__ import annotations

import numpy as np


class Adam:
    """Standard bias-corrected adaptive-moment optimizer.

    Parameters are updated in place; the moment buffers are keyed by
    parameter name so a subset of parameters can be stepped (frozen groups
    simply never appear in the grads dict).
    """

    def __init__(
        self,
        params: dict[str, np.ndarray],
        learning_rate: float,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ) -> None:
        self.params = params
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self._m = {k: np.zeros_like(v) for k, v in params.items()}
        self._v = {k: np.zeros_like(v) for k, v in params.items()}
        self._t = 0

    def step(self, grads: dict[str, np.ndarray]) -> None:
        self._t += 1
        correct1 = 1.0 - self.beta1**self._t
        correct2 = 1.0 - self.beta2**self._t
        for name, grad in grads.items():
            m = self._m[name]
            v = self._v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * grad
            v *= self.beta2
            v += (1.0 - self.beta2) * grad * grad
            m_hat = m / correct1
            v_hat = v / correct2
            self.params[name] -= self.learning_rate * m_hat / (np.sqrt(v_hat) + self.eps)
