"""Per-query cost predictors and their evaluation."""

from .baselines import (
    LinearFit,
    PredictionReport,
    QueryPrediction,
    evaluate,
    evaluate_mae,
    fit_line,
    fit_prompt_length_lr,
    neighbors,
    predict_knn,
    predict_mean,
    run_baseline,
)
from .embeddings import EmbeddingCache, EmbeddingProvider, content_hash
from .split import SplitSpec, stratified_split, stratum_test_count
from .types import Baseline, LabeledQuery, labeled_queries

__all__ = [
    "Baseline",
    "EmbeddingCache",
    "EmbeddingProvider",
    "LabeledQuery",
    "LinearFit",
    "PredictionReport",
    "QueryPrediction",
    "SplitSpec",
    "content_hash",
    "evaluate",
    "evaluate_mae",
    "fit_line",
    "fit_prompt_length_lr",
    "labeled_queries",
    "neighbors",
    "predict_knn",
    "predict_mean",
    "run_baseline",
    "stratified_split",
    "stratum_test_count",
]
