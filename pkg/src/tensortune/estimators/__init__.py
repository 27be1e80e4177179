"""Learned cost models with a scikit-learn flavored fit/predict surface."""

from .gbdt import GradientBoostedTrees
from .mlp import CostMLP
from .tuner import RecurrentAttentionTuner

__all__ = ["GradientBoostedTrees", "CostMLP", "RecurrentAttentionTuner"]
