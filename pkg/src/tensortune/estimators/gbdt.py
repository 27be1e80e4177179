"""Gradient boosted regression trees built from scratch.

Stagewise squared-error boosting on residuals with exact greedy split
search. Feature columns are argsorted once up front and the sorted index
lists are partitioned as the tree grows, so each node's split scan is a
couple of vectorized prefix-sum passes instead of a fresh sort.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin

from ..errors import DataValidationError, NumericFailure


@dataclass
class _Tree:
    feature: np.ndarray  # int32, -1 at leaves
    threshold: np.ndarray  # float64
    left: np.ndarray  # int32
    right: np.ndarray  # int32
    value: np.ndarray  # float64, leaf prediction

    def predict(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int32)
        for _ in range(64):  # depth is bounded far below this
            feat = self.feature[node]
            active = feat >= 0
            if not active.any():
                break
            rows = np.nonzero(active)[0]
            go_left = X[rows, feat[rows]] <= self.threshold[node[rows]]
            node[rows] = np.where(
                go_left, self.left[node[rows]], self.right[node[rows]]
            )
        return self.value[node]


def _check_matrix(X: np.ndarray, name: str = "X") -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise DataValidationError(f"{name} must be 2-d, got shape {X.shape}")
    if not np.isfinite(X).all():
        raise DataValidationError(f"{name} contains non-finite values")
    return X


class GradientBoostedTrees(BaseEstimator, RegressorMixin):
    """Squared-error boosting with exact split search.

    Parameters
    ----------
    num_trees : boosting rounds.
    max_depth : depth cap per tree (root is depth 0).
    learning_rate : shrinkage applied to every tree's contribution.
    min_samples_leaf : minimum samples on each side of a split.
    """

    def __init__(
        self,
        num_trees: int = 200,
        max_depth: int = 6,
        learning_rate: float = 0.1,
        min_samples_leaf: int = 4,
    ) -> None:
        self.num_trees = num_trees
        self.max_depth = max_depth
        self.learning_rate = learning_rate
        self.min_samples_leaf = min_samples_leaf

    def _validate_params(self) -> None:
        if self.num_trees < 1:
            raise DataValidationError("num_trees must be >= 1")
        if self.max_depth < 1:
            raise DataValidationError("max_depth must be >= 1")
        if not 0.0 < self.learning_rate <= 1.0:
            raise DataValidationError("learning_rate must be in (0, 1]")
        if self.min_samples_leaf < 1:
            raise DataValidationError("min_samples_leaf must be >= 1")

    def fit(self, X, y, eval_set=None):
        """Fit on (X, y); optionally track (X_val, y_val) rmse per round.

        The per-round train/validation rmse curve lands in train_curve_.
        """
        self._validate_params()
        X = _check_matrix(X)
        y = np.asarray(y, dtype=np.float64)
        if y.ndim != 1 or y.shape[0] != X.shape[0]:
            raise DataValidationError("y must be 1-d and match X rows")
        if X.shape[0] < 1:
            raise DataValidationError("fit needs at least one sample")
        if not np.isfinite(y).all():
            raise DataValidationError("y contains non-finite values")

        X_val = y_val = None
        if eval_set is not None:
            X_val = _check_matrix(eval_set[0], "X_val")
            y_val = np.asarray(eval_set[1], dtype=np.float64)

        self.n_features_in_ = X.shape[1]
        self.base_prediction_ = float(y.mean())
        self.trees_: list[_Tree] = []
        self.train_curve_: list[tuple[float, float | None]] = []

        # One stable argsort per feature; node partitions keep the order.
        order = np.argsort(X, axis=0, kind="stable").astype(np.int64).T.copy()

        pred = np.full(y.shape[0], self.base_prediction_)
        val_pred = (
            np.full(y_val.shape[0], self.base_prediction_)
            if y_val is not None
            else None
        )
        for _ in range(self.num_trees):
            residual = y - pred
            tree, train_incr = self._grow(X, residual, order)
            self.trees_.append(tree)
            pred += self.learning_rate * train_incr
            train_rmse = float(np.sqrt(np.mean((y - pred) ** 2)))
            if not np.isfinite(train_rmse):
                raise NumericFailure(
                    f"training diverged at round {len(self.trees_)}"
                )
            val_rmse = None
            if val_pred is not None:
                val_pred += self.learning_rate * tree.predict(X_val)
                val_rmse = float(np.sqrt(np.mean((y_val - val_pred) ** 2)))
            self.train_curve_.append((train_rmse, val_rmse))
        return self

    def _grow(
        self, X: np.ndarray, g: np.ndarray, root_order: np.ndarray
    ) -> tuple[_Tree, np.ndarray]:
        n, n_features = X.shape
        min_leaf = self.min_samples_leaf
        feature: list[int] = []
        threshold: list[float] = []
        left: list[int] = []
        right: list[int] = []
        value: list[float] = []
        increment = np.zeros(n)

        def new_node() -> int:
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            value.append(0.0)
            return len(feature) - 1

        root = new_node()
        stack: list[tuple[int, np.ndarray, int]] = [(root, root_order, 0)]
        while stack:
            node, order, depth = stack.pop()
            samples = order[0]
            m = samples.shape[0]
            g_total = g[samples].sum()
            best = None
            if depth < self.max_depth and m >= 2 * min_leaf:
                for j in range(n_features):
                    idx = order[j]
                    xs = X[idx, j]
                    gs = g[idx]
                    csum = np.cumsum(gs)[:-1]
                    n_left = np.arange(1, m, dtype=np.float64)
                    n_right = m - n_left
                    score = csum**2 / n_left + (g_total - csum) ** 2 / n_right
                    ok = (
                        (xs[:-1] < xs[1:])
                        & (n_left >= min_leaf)
                        & (n_right >= min_leaf)
                    )
                    if not ok.any():
                        continue
                    masked = np.where(ok, score, -np.inf)
                    pos = int(np.argmax(masked))
                    gain = masked[pos]
                    if best is None or gain > best[0]:
                        best = (gain, j, pos, (xs[pos] + xs[pos + 1]) / 2.0)
            if best is None:
                leaf_value = g_total / m
                value[node] = leaf_value
                increment[samples] = leaf_value
                continue

            _, j, _, cut = best
            go_left = np.zeros(n, dtype=bool)
            go_left[order[j][X[order[j], j] <= cut]] = True
            order_left = np.empty((n_features, int(go_left[samples].sum())), dtype=np.int64)
            order_right = np.empty((n_features, m - order_left.shape[1]), dtype=np.int64)
            for f in range(n_features):
                col = order[f]
                mask = go_left[col]
                order_left[f] = col[mask]
                order_right[f] = col[~mask]

            feature[node] = j
            threshold[node] = cut
            left_id = new_node()
            right_id = new_node()
            left[node] = left_id
            right[node] = right_id
            stack.append((left_id, order_left, depth + 1))
            stack.append((right_id, order_right, depth + 1))

        tree = _Tree(
            feature=np.asarray(feature, dtype=np.int32),
            threshold=np.asarray(threshold, dtype=np.float64),
            left=np.asarray(left, dtype=np.int32),
            right=np.asarray(right, dtype=np.int32),
            value=np.asarray(value, dtype=np.float64),
        )
        return tree, increment

    def predict(self, X) -> np.ndarray:
        if not hasattr(self, "trees_"):
            raise DataValidationError("predict called before fit")
        X = _check_matrix(X)
        if X.shape[1] != self.n_features_in_:
            raise DataValidationError(
                f"expected {self.n_features_in_} features, got {X.shape[1]}"
            )
        out = np.full(X.shape[0], self.base_prediction_)
        for tree in self.trees_:
            out += self.learning_rate * tree.predict(X)
        return out

    # -- flat weight access for the model container ----------------------

    def get_weights(self) -> dict[str, np.ndarray]:
        node_counts = np.asarray([t.feature.shape[0] for t in self.trees_], dtype=np.int64)
        return {
            "base": np.asarray([self.base_prediction_]),
            "n_features": np.asarray([self.n_features_in_], dtype=np.int64),
            "node_counts": node_counts,
            "feature": np.concatenate([t.feature for t in self.trees_]) if self.trees_ else np.zeros(0, np.int32),
            "threshold": np.concatenate([t.threshold for t in self.trees_]) if self.trees_ else np.zeros(0),
            "left": np.concatenate([t.left for t in self.trees_]) if self.trees_ else np.zeros(0, np.int32),
            "right": np.concatenate([t.right for t in self.trees_]) if self.trees_ else np.zeros(0, np.int32),
            "value": np.concatenate([t.value for t in self.trees_]) if self.trees_ else np.zeros(0),
        }

    def set_weights(self, weights: dict[str, np.ndarray]) -> None:
        self.base_prediction_ = float(weights["base"][0])
        self.n_features_in_ = int(weights["n_features"][0])
        self.trees_ = []
        offset = 0
        for count in weights["node_counts"]:
            count = int(count)
            sl = slice(offset, offset + count)
            self.trees_.append(
                _Tree(
                    feature=weights["feature"][sl].astype(np.int32),
                    threshold=weights["threshold"][sl].astype(np.float64),
                    left=weights["left"][sl].astype(np.int32),
                    right=weights["right"][sl].astype(np.int32),
                    value=weights["value"][sl].astype(np.float64),
                )
            )
            offset += count
        self.train_curve_ = []
