"""Fully-connected cost regressor with hand-written backpropagation.

Fixed two-hidden-layer architecture (input -> 64 -> 64 -> 1) with tanh
activations; tanh keeps the network smooth everywhere, which the finite
difference gradient checks rely on.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin

from ..errors import DataValidationError, NumericFailure
from .gbdt import _check_matrix
from .optim import Adam

HIDDEN_WIDTH = 64


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def ranking_grad(y: np.ndarray, y_hat: np.ndarray) -> tuple[float, np.ndarray]:
    """Pairwise logistic loss over ordered pairs and its gradient wrt y_hat."""
    ordered = y[:, None] > y[None, :]
    n_pairs = int(ordered.sum())
    if n_pairs == 0:
        return 0.0, np.zeros_like(y_hat)
    margins = y_hat[:, None] - y_hat[None, :]
    loss = float(np.logaddexp(0.0, -margins)[ordered].mean())
    sig = np.where(ordered, 1.0 / (1.0 + np.exp(margins)), 0.0)
    grad = (sig.sum(axis=0) - sig.sum(axis=1)) / n_pairs
    return loss, grad


class CostMLP(BaseEstimator, RegressorMixin):
    """Tabular cost model trained with minibatch Adam.

    loss is either "rmse" (squared error) or "ranking" (within-batch pairwise
    logistic). Training is bit-deterministic for a fixed seed.
    """

    def __init__(
        self,
        batch_size: int = 16,
        epochs: int = 200,
        learning_rate: float = 1e-3,
        loss: str = "rmse",
        seed: int = 0,
    ) -> None:
        self.batch_size = batch_size
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.loss = loss
        self.seed = seed

    def _init_params(self, n_features: int) -> None:
        rng = np.random.default_rng(self.seed)
        h = HIDDEN_WIDTH
        self.params_ = {
            "W1": _glorot(rng, n_features, h),
            "b1": np.zeros(h),
            "W2": _glorot(rng, h, h),
            "b2": np.zeros(h),
            "W3": _glorot(rng, h, 1),
            "b3": np.zeros(1),
        }
        self.n_features_in_ = n_features

    def _forward(self, X: np.ndarray) -> tuple[np.ndarray, dict]:
        p = self.params_
        z1 = X @ p["W1"] + p["b1"]
        h1 = np.tanh(z1)
        z2 = h1 @ p["W2"] + p["b2"]
        h2 = np.tanh(z2)
        out = (h2 @ p["W3"] + p["b3"]).ravel()
        return out, {"X": X, "h1": h1, "h2": h2}

    def _backward(self, cache: dict, d_out: np.ndarray) -> dict[str, np.ndarray]:
        p = self.params_
        X, h1, h2 = cache["X"], cache["h1"], cache["h2"]
        d_out = d_out[:, None]
        grads = {
            "W3": h2.T @ d_out,
            "b3": d_out.sum(axis=0),
        }
        d_h2 = (d_out @ p["W3"].T) * (1.0 - h2**2)
        grads["W2"] = h1.T @ d_h2
        grads["b2"] = d_h2.sum(axis=0)
        d_h1 = (d_h2 @ p["W2"].T) * (1.0 - h1**2)
        grads["W1"] = X.T @ d_h1
        grads["b1"] = d_h1.sum(axis=0)
        return grads

    def loss_and_gradients(
        self, X: np.ndarray, y: np.ndarray
    ) -> tuple[float, dict[str, np.ndarray]]:
        """Loss value plus analytic parameter gradients for one batch."""
        out, cache = self._forward(np.asarray(X, dtype=np.float64))
        y = np.asarray(y, dtype=np.float64)
        if self.loss == "ranking":
            loss, d_out = ranking_grad(y, out)
        else:
            diff = out - y
            loss = float(np.mean(diff**2))
            d_out = 2.0 * diff / y.shape[0]
        return loss, self._backward(cache, d_out)

    def fit(self, X, y, eval_set=None):
        if self.loss not in ("rmse", "ranking"):
            raise DataValidationError(f"unknown loss {self.loss!r}")
        if self.batch_size < 1 or self.epochs < 0:
            raise DataValidationError("batch_size must be >= 1 and epochs >= 0")
        X = _check_matrix(X)
        y = np.asarray(y, dtype=np.float64)
        if y.shape != (X.shape[0],):
            raise DataValidationError("y must be 1-d and match X rows")
        self._init_params(X.shape[1])
        optimizer = Adam(self.params_, self.learning_rate)
        rng = np.random.default_rng(self.seed + 1)

        X_val = y_val = None
        if eval_set is not None:
            X_val = _check_matrix(eval_set[0], "X_val")
            y_val = np.asarray(eval_set[1], dtype=np.float64)

        self.train_curve_: list[tuple[float, float | None]] = []
        n = X.shape[0]
        for epoch in range(self.epochs):
            perm = rng.permutation(n)
            for start in range(0, n, self.batch_size):
                batch = perm[start : start + self.batch_size]
                loss, grads = self.loss_and_gradients(X[batch], y[batch])
                if not np.isfinite(loss):
                    raise NumericFailure(f"loss became non-finite at epoch {epoch}")
                optimizer.step(grads)
            train_rmse = float(np.sqrt(np.mean((self.predict(X) - y) ** 2)))
            val_rmse = None
            if X_val is not None:
                val_rmse = float(np.sqrt(np.mean((self.predict(X_val) - y_val) ** 2)))
            self.train_curve_.append((train_rmse, val_rmse))
        return self

    def predict(self, X) -> np.ndarray:
        if not hasattr(self, "params_"):
            raise DataValidationError("predict called before fit")
        X = _check_matrix(X)
        if X.shape[1] != self.n_features_in_:
            raise DataValidationError(
                f"expected {self.n_features_in_} features, got {X.shape[1]}"
            )
        out, _ = self._forward(X)
        return out

    def get_weights(self) -> dict[str, np.ndarray]:
        return dict(self.params_)

    def set_weights(self, weights: dict[str, np.ndarray]) -> None:
        self.params_ = {k: np.asarray(v, dtype=np.float64) for k, v in weights.items()}
        self.n_features_in_ = self.params_["W1"].shape[0]
        self.train_curve_ = []
