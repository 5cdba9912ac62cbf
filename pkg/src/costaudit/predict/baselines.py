"""The three per-query cost predictors and MAE evaluation.

All predictors are fit per model: a query's prediction only ever looks at
training rows of the same model.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from ..errors import EmbeddingError, InputError
from .split import SplitSpec, stratified_split
from .types import Baseline, LabeledQuery


def _rows_for(train: Iterable[LabeledQuery], model_id: str) -> list[LabeledQuery]:
    rows = [q for q in train if q.model_id == model_id]
    if not rows:
        raise InputError(f"empty training set for model {model_id!r}")
    return rows


def _mean(values: Sequence[float]) -> float:
    return math.fsum(values) / len(values)


def predict_mean(train: Iterable[LabeledQuery], query: LabeledQuery) -> float:
    return _mean([q.actual_cost for q in _rows_for(train, query.model_id)])


@dataclass(frozen=True)
class LinearFit:
    alpha: float  # USD per prompt token
    beta: float  # USD
    fallback: bool = False  # all prompt lengths identical, predicting the mean

    def predict(self, prompt_tokens: int) -> float:
        return self.alpha * prompt_tokens + self.beta


def fit_line(xs: Sequence[float], ys: Sequence[float]) -> LinearFit:
    """Closed-form ordinary least squares for ``y = alpha * x + beta``."""
    if not xs:
        raise InputError("empty training set")
    x_bar, y_bar = _mean(xs), _mean(ys)
    sxx = math.fsum((x - x_bar) ** 2 for x in xs)
    if sxx == 0:
        return LinearFit(0.0, y_bar, fallback=True)
    sxy = math.fsum((x - x_bar) * (y - y_bar) for x, y in zip(xs, ys))
    alpha = sxy / sxx
    return LinearFit(alpha, y_bar - alpha * x_bar)


def fit_prompt_length_lr(train: Iterable[LabeledQuery]) -> dict[str, LinearFit]:
    by_model: dict[str, list[LabeledQuery]] = defaultdict(list)
    for q in train:
        by_model[q.model_id].append(q)
    if not by_model:
        raise InputError("empty training set")
    return {
        m: fit_line([float(q.prompt_tokens) for q in rows], [q.actual_cost for q in rows])
        for m, rows in sorted(by_model.items())
    }


def _unit_rows(vectors: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(vectors, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise EmbeddingError("zero-length embedding has no direction")
    return vectors / norms


def neighbors(
    train: Iterable[LabeledQuery],
    query: LabeledQuery,
    k: int = 5,
    metric: str = "cosine",
) -> list[tuple[float, LabeledQuery]]:
    """The ``k`` nearest same-model training rows as ``(distance, row)`` pairs.

    Equal distances are ordered by ascending query id.
    """
    if query.embedding is None:
        raise EmbeddingError(f"query {query.query_id!r} has no embedding")
    rows = [q for q in _rows_for(train, query.model_id)]
    missing = [q.query_id for q in rows if q.embedding is None]
    if missing:
        raise EmbeddingError(f"training rows without embeddings: {', '.join(missing[:5])}")
    if k < 1:
        raise InputError(f"k must be positive, got {k}")
    if len(rows) < k:
        raise InputError(
            f"insufficient neighbors for model {query.model_id!r}: {len(rows)} < k={k}"
        )
    mat = np.asarray([q.embedding for q in rows], dtype=float)
    vec = np.asarray(query.embedding, dtype=float)
    if mat.shape[1] != vec.shape[0]:
        raise EmbeddingError(
            f"dimension mismatch: training {mat.shape[1]}, query {vec.shape[0]}"
        )
    if metric == "cosine":
        dist = 1.0 - _unit_rows(mat) @ _unit_rows(vec[None, :])[0]
    elif metric == "euclidean":
        dist = np.linalg.norm(mat - vec, axis=1)
    else:
        raise InputError(f"unknown distance metric {metric!r}")
    order = sorted(range(len(rows)), key=lambda i: (float(dist[i]), rows[i].query_id))
    return [(float(dist[i]), rows[i]) for i in order[:k]]


def predict_knn(
    train: Iterable[LabeledQuery],
    query: LabeledQuery,
    k: int = 5,
    *,
    metric: str = "cosine",
    weighted: bool = False,
) -> float:
    near = neighbors(train, query, k, metric)
    if not weighted:
        return _mean([q.actual_cost for _, q in near])
    weights = [1.0 / (d + 1e-12) for d, _ in near]
    return math.fsum(w * q.actual_cost for w, (_, q) in zip(weights, near)) / math.fsum(weights)


def evaluate_mae(predictions: Iterable[tuple[float, float]]) -> float:
    """Mean absolute error over ``(predicted, actual)`` pairs."""
    errors = [abs(p - a) for p, a in predictions]
    if not errors:
        raise InputError("cannot compute MAE of an empty prediction list")
    return _mean(errors)


@dataclass(frozen=True)
class QueryPrediction:
    query_id: str
    dataset_id: str
    predicted: float
    actual: float


@dataclass(frozen=True)
class PredictionReport:
    model_id: str
    baseline: Baseline
    per_query: list[QueryPrediction]
    metadata: dict = field(default_factory=dict)

    @property
    def mae(self) -> float:
        return evaluate_mae((p.predicted, p.actual) for p in self.per_query)

    @property
    def per_dataset_mae(self) -> dict[str, float]:
        groups: dict[str, list[tuple[float, float]]] = defaultdict(list)
        for p in self.per_query:
            groups[p.dataset_id].append((p.predicted, p.actual))
        return {d: evaluate_mae(v) for d, v in sorted(groups.items())}


def run_baseline(
    train: Sequence[LabeledQuery],
    test: Sequence[LabeledQuery],
    baseline: Baseline | str,
    *,
    k: int = 5,
    metric: str = "cosine",
    weighted: bool = False,
) -> list[PredictionReport]:
    """Fit on ``train`` and score every test row, one report per model."""
    baseline = Baseline.parse(baseline)
    fits = fit_prompt_length_lr(train) if baseline is Baseline.PROMPT_LENGTH_LR else {}
    by_model: dict[str, list[QueryPrediction]] = defaultdict(list)
    for q in test:
        if baseline is Baseline.MEAN:
            pred = predict_mean(train, q)
        elif baseline is Baseline.PROMPT_LENGTH_LR:
            if q.model_id not in fits:
                raise InputError(f"empty training set for model {q.model_id!r}")
            pred = fits[q.model_id].predict(q.prompt_tokens)
        else:
            pred = predict_knn(train, q, k, metric=metric, weighted=weighted)
        by_model[q.model_id].append(QueryPrediction(q.query_id, q.dataset_id, pred, q.actual_cost))
    reports = []
    for model_id, preds in sorted(by_model.items()):
        meta: dict = {"train_size": sum(1 for t in train if t.model_id == model_id)}
        if baseline is Baseline.PROMPT_LENGTH_LR:
            fit = fits[model_id]
            meta.update(alpha=fit.alpha, beta=fit.beta, fallback=fit.fallback)
        elif baseline is Baseline.EMBEDDING_KNN:
            meta.update(k=k, distance=metric, pooling="distance_weighted" if weighted else "unweighted")
        reports.append(PredictionReport(model_id, baseline, preds, meta))
    return reports


def evaluate(
    queries: Sequence[LabeledQuery],
    spec: SplitSpec,
    baseline: Baseline | str,
    **kwargs,
) -> list[PredictionReport]:
    train, test = stratified_split(queries, spec)
    return run_baseline(train, test, baseline, **kwargs)
