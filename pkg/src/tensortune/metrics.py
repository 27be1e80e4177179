"""Ranking and regression metrics over (label, prediction) pairs.

All functions take the true labels first and the predicted scores second,
validate finiteness, and raise DataValidationError on malformed input.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataValidationError


def _as_pair(y: np.ndarray, y_hat: np.ndarray, min_n: int) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y, dtype=np.float64)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    if y.ndim != 1 or y_hat.ndim != 1:
        raise DataValidationError("labels and predictions must be 1-d")
    if y.shape != y_hat.shape:
        raise DataValidationError(
            f"length mismatch: {y.shape[0]} labels vs {y_hat.shape[0]} predictions"
        )
    if y.shape[0] < min_n:
        raise DataValidationError(f"need at least {min_n} entries, got {y.shape[0]}")
    if not (np.isfinite(y).all() and np.isfinite(y_hat).all()):
        raise DataValidationError("labels and predictions must be finite")
    return y, y_hat


@dataclass(frozen=True)
class LabelPair:
    """True labels alongside predicted scores for one evaluation slice."""

    y: tuple[float, ...]
    y_hat: tuple[float, ...]

    def __post_init__(self) -> None:
        _as_pair(np.asarray(self.y), np.asarray(self.y_hat), min_n=1)

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        return np.asarray(self.y), np.asarray(self.y_hat)


def pairwise_comparison_accuracy(y, y_hat) -> float:
    """Fraction of unordered index pairs ranked consistently.

    A pair (i, j) counts as correct when sign(y_i - y_j) equals
    sign(y_hat_i - y_hat_j), so a tie on one side only agrees with a tie on
    the other. Full agreement over n(n-1)/2 pairs scores 1.0.
    """
    y, y_hat = _as_pair(y, y_hat, min_n=2)
    true_order = np.sign(y[:, None] - y[None, :])
    pred_order = np.sign(y_hat[:, None] - y_hat[None, :])
    agree = true_order == pred_order
    iu = np.triu_indices(y.shape[0], k=1)
    return float(np.mean(agree[iu]))


def top_k_score(y, y_hat, k: int) -> float:
    """Best true label reachable through the model's k favourite picks.

    Selects the k indices with the highest predicted score (stable order on
    ties) and returns their best true label divided by the overall best.
    """
    y, y_hat = _as_pair(y, y_hat, min_n=1)
    n = y.shape[0]
    if not 1 <= k <= n:
        raise DataValidationError(f"k must satisfy 1 <= k <= {n}, got {k}")
    best = float(y.max())
    if best <= 0:
        raise DataValidationError("top_k_score needs a positive best label")
    picks = np.argsort(-y_hat, kind="stable")[:k]
    return float(y[picks].max()) / best


def rmse(y, y_hat) -> float:
    """Root mean squared error."""
    y, y_hat = _as_pair(y, y_hat, min_n=1)
    return float(np.sqrt(np.mean((y - y_hat) ** 2)))


def ranking_loss(y, y_hat) -> float:
    """Mean pairwise logistic loss over ordered pairs with y_i > y_j.

    Returns 0.0 when no strictly ordered pair exists.
    """
    y, y_hat = _as_pair(y, y_hat, min_n=1)
    ordered = y[:, None] > y[None, :]
    if not ordered.any():
        return 0.0
    margins = (y_hat[:, None] - y_hat[None, :])[ordered]
    return float(np.mean(np.logaddexp(0.0, -margins)))
