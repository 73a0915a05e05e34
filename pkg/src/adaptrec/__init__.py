"""Sequential recommendation with learned per-user sequence-length adaptation."""

from .config import RunConfig, config_hash, load_config
from .data import (
    Catalog,
    InteractionSequence,
    SplitDataset,
    SyntheticSpec,
    build_dataset,
    generate_synthetic,
    leave_one_out,
    load_tsv,
)
from .estimator import AdaptiveSequenceRecommender, validate_interactions
from .evaluation import ComparisonTable, compare_lengths, evaluate
from .metrics import MetricsReport, hr_at_k, ndcg_at_k
from .trainer import ModelState, TrainReport, train

__version__ = "0.1.0"

__all__ = [
    "AdaptiveSequenceRecommender",
    "Catalog",
    "ComparisonTable",
    "InteractionSequence",
    "MetricsReport",
    "ModelState",
    "RunConfig",
    "SplitDataset",
    "SyntheticSpec",
    "TrainReport",
    "build_dataset",
    "compare_lengths",
    "config_hash",
    "evaluate",
    "generate_synthetic",
    "hr_at_k",
    "leave_one_out",
    "load_config",
    "load_tsv",
    "ndcg_at_k",
    "train",
    "validate_interactions",
]
