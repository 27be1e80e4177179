"""tensortune: hardware-aware cost modeling and schedule tuning toolkit."""

from __future__ import annotations

__version__ = "0.1.0"

from .data import (
    Dataset,
    Kernel,
    MeasurementRecord,
    ScheduleConfig,
    Task,
    load_dataset,
    save_dataset,
)
from .errors import DataValidationError, NumericFailure, TensorTuneError
from .hardware import HardwareParams, feature_vector, map_features, registry
from .metrics import pairwise_comparison_accuracy, rmse, top_k_score
from .models import (
    CostModel,
    GBDTConfig,
    TrainConfig,
    evaluate,
    load_model,
    save_model,
    train_gbdt,
    train_mlp,
    train_tuner,
)
from .oracle import OracleConfig, gen_dataset, oracle_cost
from .sampling import SamplerConfig, prune_dataset
from .search import SearchConfig, run_search, tune
from .splits import SplitAssignment, split
from .transfer import TransferConfig, adapt_hardware, fine_tune
from .workload import characterize, flop_count

__all__ = [
    "__version__",
    "Dataset",
    "Kernel",
    "MeasurementRecord",
    "ScheduleConfig",
    "Task",
    "load_dataset",
    "save_dataset",
    "DataValidationError",
    "NumericFailure",
    "TensorTuneError",
    "HardwareParams",
    "feature_vector",
    "map_features",
    "registry",
    "pairwise_comparison_accuracy",
    "rmse",
    "top_k_score",
    "CostModel",
    "GBDTConfig",
    "TrainConfig",
    "evaluate",
    "load_model",
    "save_model",
    "train_gbdt",
    "train_mlp",
    "train_tuner",
    "OracleConfig",
    "gen_dataset",
    "oracle_cost",
    "SamplerConfig",
    "prune_dataset",
    "SearchConfig",
    "run_search",
    "tune",
    "SplitAssignment",
    "split",
    "TransferConfig",
    "adapt_hardware",
    "fine_tune",
    "characterize",
    "flop_count",
]
