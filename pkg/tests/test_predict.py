import math
import random
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from costaudit import fixtures
from costaudit.errors import EmbeddingError, InputError, TextUnavailableError
from costaudit.ledger import Ledger
from costaudit.predict import (
    Baseline,
    LabeledQuery,
    SplitSpec,
    evaluate,
    evaluate_mae,
    fit_line,
    fit_prompt_length_lr,
    labeled_queries,
    neighbors,
    predict_knn,
    predict_mean,
    run_baseline,
    stratified_split,
)

from conftest import record


def lq(qid, cost, prompt=100, emb=None, model="m", dataset="d"):
    return LabeledQuery(qid, dataset, model, prompt, cost, None if emb is None else tuple(emb))


def point_fixture(n=20, dim=4, seed=3):
    rng = random.Random(seed)
    return [
        lq(f"q{i:02d}", rng.uniform(0.001, 0.5), emb=[rng.gauss(0, 1) for _ in range(dim)]) for i in range(n)
    ]


def exhaustive_knn(train, query, k):
    """Reference scan: plain-Python cosine distance, ties by query id."""

    def cos_dist(u, v):
        dot = sum(a * b for a, b in zip(u, v))
        return 1 - dot / (math.sqrt(sum(a * a for a in u)) * math.sqrt(sum(b * b for b in v)))

    scored = sorted(((cos_dist(t.embedding, query.embedding), t.query_id, t) for t in train), key=lambda x: x[:2])
    return [t for _, _, t in scored[:k]]


# split


def corpus(per_dataset, datasets=("A", "B", "C"), models=("m1", "m2")):
    return [lq(f"{d}{i}", 1.0, model=m, dataset=d) for d in datasets for i in range(per_dataset) for m in models]


def test_split_counts_and_grouping():
    train, test = stratified_split(corpus(10), SplitSpec(0.2, seed=0))
    per_dataset = Counter(q.dataset_id for q in test if q.model_id == "m1")
    assert per_dataset == {"A": 2, "B": 2, "C": 2}
    ids = lambda rows, m: {(q.dataset_id, q.query_id) for q in rows if q.model_id == m}
    assert ids(test, "m1") == ids(test, "m2")
    assert not ids(test, "m1") & ids(train, "m1")
    assert len(train) + len(test) == 60


def test_split_deterministic_and_seed_sensitive():
    data = corpus(100, datasets=("A",), models=("m",))
    a = stratified_split(data, SplitSpec(0.2, seed=7))
    assert a == stratified_split(data, SplitSpec(0.2, seed=7))
    memberships = {frozenset(q.query_id for q in stratified_split(data, SplitSpec(0.2, seed=s))[1]) for s in range(5)}
    assert len(memberships) > 1


def test_split_errors():
    with pytest.raises(InputError, match="single query"):
        stratified_split([lq("a", 1)], SplitSpec())
    with pytest.raises(InputError, match="empty"):
        stratified_split([], SplitSpec())
    with pytest.raises(InputError):
        SplitSpec(test_ratio=1.0)


@settings(max_examples=100, deadline=None)
@given(st.dictionaries(st.sampled_from("ABCDE"), st.integers(2, 40), min_size=1), st.floats(0.05, 0.95), st.integers(0, 99))
def test_split_exact_per_stratum_counts(sizes, ratio, seed):
    data = [lq(f"{d}{i}", 1.0, dataset=d) for d, n in sizes.items() for i in range(n)]
    _, test = stratified_split(data, SplitSpec(ratio, seed))
    got = Counter(q.dataset_id for q in test)
    for d, n in sizes.items():
        assert got[d] == min(max(round(n * ratio), 1), n - 1)


# mean


def test_predict_mean_scoping():
    train = [lq("a", 1), lq("b", 2), lq("c", 3), lq("z", 100, model="other")]
    assert predict_mean(train, lq("x", 0)) == 2
    assert predict_mean([lq("a", 5)], lq("x", 0)) == 5
    with pytest.raises(InputError, match="empty training set"):
        predict_mean(train, lq("x", 0, model="ghost"))


def test_mean_mae_is_mean_absolute_deviation():
    rng = random.Random(5)
    rows = [lq(f"q{i}", rng.uniform(0, 1)) for i in range(10)]
    mu = sum(q.actual_cost for q in rows) / 10
    mad = sum(abs(q.actual_cost - mu) for q in rows) / 10
    (rep,) = run_baseline(rows, rows, Baseline.MEAN)
    assert rep.mae == pytest.approx(mad, rel=1e-12)


# linear regression


def test_exact_line_and_fallback():
    fit = fit_line([1, 2], [2, 4])
    assert (fit.alpha, fit.beta, fit.predict(3)) == (2, 0, 6)
    flat = fit_line([5, 5, 5], [1, 2, 6])
    assert flat.fallback and flat.predict(999) == 3


def normal_equations(xs, ys):
    X = np.column_stack([np.asarray(xs, float), np.ones(len(xs))])
    return np.linalg.solve(X.T @ X, X.T @ np.asarray(ys, float))


@pytest.mark.parametrize("seed", range(5))
def test_lr_matches_normal_equations(seed):
    rng = np.random.default_rng(seed)
    xs = rng.integers(50, 5000, 50)
    ys = 3e-6 * xs + 0.01 + rng.normal(0, 0.002, 50)
    alpha, beta = normal_equations(xs, ys)
    fit = fit_line([float(x) for x in xs], [float(y) for y in ys])
    assert fit.alpha == pytest.approx(alpha, rel=1e-9)
    assert fit.beta == pytest.approx(beta, rel=1e-9)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(1, 5000), st.floats(0, 1)), min_size=2, max_size=40))
def test_lr_never_worse_than_mean_in_sample(points):
    train = [lq(f"q{i}", y, prompt=x) for i, (x, y) in enumerate(points)]
    fit = fit_prompt_length_lr(train)["m"]
    mu = math.fsum(y for _, y in points) / len(points)
    rss_lr = math.fsum((fit.predict(x) - y) ** 2 for x, y in points)
    rss_mean = math.fsum((mu - y) ** 2 for _, y in points)
    assert rss_lr <= rss_mean * (1 + 1e-9) + 1e-15


# knn


def test_knn_zero_distance_and_full_neighborhood():
    train = point_fixture()
    target = train[4]
    assert predict_knn(train, lq("new", 0, emb=target.embedding), k=1) == target.actual_cost
    query = lq("new", 0, emb=[1, 0, 0, 0])
    assert predict_knn(train, query, k=len(train)) == predict_mean(train, query)


@pytest.mark.parametrize("k", [1, 3, 5])
def test_knn_matches_exhaustive_scan(k):
    pts = point_fixture(20)
    for i in range(len(pts)):
        query, train = pts[i], pts[:i] + pts[i + 1 :]
        expected = exhaustive_knn(train, query, k)
        got = [q for _, q in neighbors(train, query, k)]
        assert [q.query_id for q in got] == [q.query_id for q in expected]
        assert predict_knn(train, query, k) == math.fsum(q.actual_cost for q in expected) / k


def test_knn_tie_break_by_query_id():
    train = [lq("b", 1.0, emb=[1, 0]), lq("a", 3.0, emb=[2, 0]), lq("c", 5.0, emb=[0, 1])]
    assert [q.query_id for _, q in neighbors(train, lq("x", 0, emb=[1, 0]), 2)] == ["a", "b"]


def test_knn_scale_invariance():
    pts = point_fixture(15)
    scaled = [lq(q.query_id, q.actual_cost, emb=[7.5 * v for v in q.embedding]) for q in pts]
    query = lq("x", 0, emb=[0.3, -1, 0.2, 0.9])
    assert [q.query_id for _, q in neighbors(pts, query, 5)] == [q.query_id for _, q in neighbors(scaled, query, 5)]


def test_knn_errors():
    pts = point_fixture(4)
    with pytest.raises(InputError, match="insufficient neighbors"):
        predict_knn(pts, lq("x", 0, emb=[1, 0, 0, 0]), k=5)
    with pytest.raises(EmbeddingError, match="no embedding"):
        predict_knn(pts, lq("x", 0), k=1)
    with pytest.raises(EmbeddingError, match="dimension mismatch"):
        predict_knn(pts, lq("x", 0, emb=[1, 0]), k=1)


def test_weighted_knn_flag():
    train = [lq("a", 1.0, emb=[1, 0]), lq("b", 3.0, emb=[0, 1])]
    near_a = lq("x", 0, emb=[1, 0.1])
    assert predict_knn(train, near_a, 2) == 2.0
    assert predict_knn(train, near_a, 2, weighted=True) < 1.1


# evaluation


def test_mae_examples():
    assert evaluate_mae([(1, 2), (3, 2)]) == 1.0
    assert evaluate_mae([(4, 4), (2, 2)]) == 0
    with pytest.raises(InputError):
        evaluate_mae([])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3)), min_size=1, max_size=20), st.floats(-1e3, 1e3))
def test_mae_translation_equivariant(pairs, shift):
    shifted = [(p + shift, a + shift) for p, a in pairs]
    assert evaluate_mae(shifted) == pytest.approx(evaluate_mae(pairs), abs=1e-9)


def test_labeled_queries_requires_text(reference_catalog):
    ledger = Ledger([record("GPT-5.2")])
    with pytest.raises(TextUnavailableError, match="text unavailable"):
        labeled_queries(ledger, reference_catalog, require_text=True)


def test_demo_corpus_end_to_end(reference_catalog):
    from costaudit.predict import EmbeddingProvider

    ledger = fixtures.demo_ledger()
    provider = EmbeddingProvider(fixtures.data_path(fixtures.DEMO_EMBEDDINGS_FILE), offline=True)
    texts = [r.query_text for r in ledger]
    queries = labeled_queries(ledger, reference_catalog, provider.get_many(texts), require_text=True)
    assert provider.network_calls == 0
    spec = SplitSpec(0.2, seed=7)
    knn = evaluate(queries, spec, "knn", k=5)
    mean = evaluate(queries, spec, "mean")
    assert [r.model_id for r in knn] == sorted(reference_catalog.model_ids)
    for r in knn:
        assert len(r.per_query) == 12 and set(r.per_dataset_mae) == set(fixtures.DEMO_DATASETS)
        assert r.metadata["k"] == 5 and r.metadata["distance"] == "cosine"
    # signal is planted in the embeddings, so KNN should win on average
    assert sum(r.mae for r in knn) < sum(r.mae for r in mean)
