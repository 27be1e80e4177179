"""Boosted-tree regressor: exactness, curves, and weight round-trips.

Split decisions are cross-checked against a brute-force SSE-minimizing
oracle that enumerates every cut position, so the tests do not share the
estimator's gain formulation.
"""

from __future__ import annotations

import numpy as np
import pytest

from tensortune.errors import DataValidationError
from tensortune.estimators import GradientBoostedTrees


def brute_force_stump(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Best single split of (x, y) by total squared error, side means out.

    Enumerates every boundary between distinct sorted x values and keeps
    the one minimizing SSE; returns the per-sample piecewise prediction.
    """
    order = np.argsort(x, kind="stable")
    xs, ys = x[order], y[order]
    best_sse = np.inf
    best_pred = np.full_like(y, y.mean())
    for k in range(1, len(xs)):
        if xs[k - 1] == xs[k]:
            continue
        left, right = ys[:k], ys[k:]
        sse = ((left - left.mean()) ** 2).sum() + ((right - right.mean()) ** 2).sum()
        if sse < best_sse:
            best_sse = sse
            cut = (xs[k - 1] + xs[k]) / 2.0
            pred = np.where(x <= cut, left.mean(), right.mean())
            best_pred = pred
    return best_pred


def step_data(n: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.0, 1.0, size=n)
    y = np.where(x < 0.5, 0.2, 0.8)
    return x.reshape(-1, 1), y


class TestConstantLabels:
    def test_all_equal_labels_predict_the_constant(self):
        rng = np.random.default_rng(3)
        X = rng.normal(size=(40, 5))
        y = np.ones(40)
        model = GradientBoostedTrees(num_trees=20).fit(X, y)
        assert np.array_equal(model.predict(X), np.ones(40))
        assert np.array_equal(
            model.predict(rng.normal(size=(7, 5))), np.ones(7)
        )

    def test_all_equal_labels_train_rmse_is_zero(self):
        X = np.arange(12.0).reshape(-1, 2)
        model = GradientBoostedTrees(num_trees=5).fit(X, np.full(6, 1.0))
        assert [t for t, _ in model.train_curve_] == [0.0] * 5


class TestStepFunction:
    """A single-feature step target is learnable with one split per tree."""

    def test_validation_rmse_beats_one_percent(self):
        # Train x on a grid so the boundary cut is unambiguous at 0.5.
        x_train = np.linspace(0.0, 1.0, 200)
        y_train = np.where(x_train < 0.5, 0.2, 0.8)
        X_val, y_val = step_data(200, seed=11)
        model = GradientBoostedTrees().fit(x_train.reshape(-1, 1), y_train)
        rmse = float(np.sqrt(np.mean((model.predict(X_val) - y_val) ** 2)))
        assert rmse <= 0.01

    def test_matches_closed_form_piecewise_fit(self):
        x_train = np.linspace(0.0, 1.0, 200)
        y_train = np.where(x_train < 0.5, 0.2, 0.8)
        X_val, y_val = step_data(120, seed=12)
        oracle = np.where(X_val[:, 0] < 0.5, 0.2, 0.8)
        model = GradientBoostedTrees().fit(x_train.reshape(-1, 1), y_train)
        # Residual shrinks by (1 - lr) per round; 200 rounds leave ~1e-9.
        assert np.max(np.abs(model.predict(X_val) - oracle)) < 1e-6
        assert np.array_equal(oracle, y_val)

    def test_single_stump_equals_brute_force_split(self):
        x = np.array([0.0, 1.0, 2.0, 3.0, 4.0, 5.0])
        y = np.array([1.0, 2.0, 1.5, 10.0, 14.0, 12.0])
        expected = brute_force_stump(x, y)
        model = GradientBoostedTrees(
            num_trees=1, max_depth=1, learning_rate=1.0, min_samples_leaf=1
        ).fit(x.reshape(-1, 1), y)
        np.testing.assert_allclose(model.predict(x.reshape(-1, 1)), expected)

    def test_single_stump_on_dyadic_values_is_exact(self):
        # All quantities are dyadic rationals, so means come out exact and
        # base + residual must reconstruct the side means bit-for-bit.
        x = np.array([0.0, 1.0, 2.0, 3.0])
        y = np.array([1.0, 2.0, 10.0, 14.0])
        model = GradientBoostedTrees(
            num_trees=1, max_depth=1, learning_rate=1.0, min_samples_leaf=1
        ).fit(x.reshape(-1, 1), y)
        assert model.predict(x.reshape(-1, 1)).tolist() == [1.5, 1.5, 12.0, 12.0]


class TestTrainingCurve:
    def make_regression(self, seed: int = 0, n: int = 120):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(n, 5))
        y = X @ rng.normal(size=5) + np.sin(3.0 * X[:, 0])
        return X, y

    def test_train_rmse_is_non_increasing(self):
        X, y = self.make_regression()
        model = GradientBoostedTrees(num_trees=60).fit(X, y)
        curve = [t for t, _ in model.train_curve_]
        assert len(curve) == 60
        for prev, cur in zip(curve, curve[1:]):
            assert cur <= prev + 1e-12

    def test_no_eval_set_leaves_validation_column_empty(self):
        X, y = self.make_regression()
        model = GradientBoostedTrees(num_trees=8).fit(X, y)
        assert all(v is None for _, v in model.train_curve_)

    def test_validation_curve_final_entry_matches_fresh_predict(self):
        X, y = self.make_regression(seed=1)
        X_val, y_val = self.make_regression(seed=2, n=40)
        model = GradientBoostedTrees(num_trees=30).fit(
            X, y, eval_set=(X_val, y_val)
        )
        expected = float(np.sqrt(np.mean((y_val - model.predict(X_val)) ** 2)))
        assert model.train_curve_[-1][1] == expected

    def test_final_train_rmse_not_above_initial(self):
        X, y = self.make_regression(seed=4)
        model = GradientBoostedTrees(num_trees=40).fit(X, y)
        curve = [t for t, _ in model.train_curve_]
        assert curve[-1] <= curve[0]


class TestDeterminismAndWeights:
    def fitted(self, seed: int = 7):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(80, 6))
        y = X[:, 0] * 2.0 - X[:, 3] + rng.normal(scale=0.1, size=80)
        return GradientBoostedTrees(num_trees=25, max_depth=3).fit(X, y), X

    def test_refit_is_bit_identical(self):
        model_a, X = self.fitted()
        model_b, _ = self.fitted()
        assert np.array_equal(model_a.predict(X), model_b.predict(X))
        assert model_a.train_curve_ == model_b.train_curve_

    def test_weight_round_trip_preserves_predictions(self):
        model, X = self.fitted()
        clone = GradientBoostedTrees(num_trees=25, max_depth=3)
        clone.set_weights(model.get_weights())
        assert np.array_equal(clone.predict(X), model.predict(X))

    def test_weight_arrays_are_consistent(self):
        model, _ = self.fitted()
        w = model.get_weights()
        assert int(w["node_counts"].sum()) == w["feature"].shape[0]
        assert w["node_counts"].shape[0] == 25
        assert w["n_features"][0] == 6
        for key in ("feature", "threshold", "left", "right", "value"):
            assert w[key].shape[0] == w["feature"].shape[0]


class TestValidation:
    @pytest.mark.parametrize(
        "kwargs",
        [
            {"num_trees": 0},
            {"max_depth": 0},
            {"learning_rate": 0.0},
            {"learning_rate": 1.5},
            {"min_samples_leaf": 0},
        ],
    )
    def test_bad_hyperparameters_are_rejected(self, kwargs):
        with pytest.raises(DataValidationError):
            GradientBoostedTrees(**kwargs).fit(np.zeros((4, 2)), np.zeros(4))

    def test_predict_before_fit(self):
        with pytest.raises(DataValidationError, match="before fit"):
            GradientBoostedTrees().predict(np.zeros((1, 2)))

    def test_feature_count_mismatch(self):
        model = GradientBoostedTrees(num_trees=2).fit(
            np.zeros((6, 3)), np.arange(6.0)
        )
        with pytest.raises(DataValidationError, match="features"):
            model.predict(np.zeros((2, 4)))

    def test_non_finite_inputs_are_rejected(self):
        X = np.zeros((4, 2))
        X[1, 1] = np.nan
        with pytest.raises(DataValidationError, match="non-finite"):
            GradientBoostedTrees().fit(X, np.zeros(4))
        with pytest.raises(DataValidationError, match="non-finite"):
            GradientBoostedTrees().fit(np.zeros((4, 2)), np.array([0, 1, np.inf, 2.0]))

    def test_y_must_match_rows(self):
        with pytest.raises(DataValidationError, match="match X rows"):
            GradientBoostedTrees().fit(np.zeros((4, 2)), np.zeros(5))

    def test_x_must_be_two_dimensional(self):
        with pytest.raises(DataValidationError, match="2-d"):
            GradientBoostedTrees().fit(np.zeros(4), np.zeros(4))
