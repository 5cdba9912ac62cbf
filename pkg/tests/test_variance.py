import math
import statistics

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from costaudit import fixtures
from costaudit.errors import InputError, StatisticsError
from costaudit.ledger import Ledger
from costaudit.variance import (
    Metric,
    Observation,
    TrialGroup,
    describe,
    model_variance_summary,
    trial_groups,
    within_query_stats,
)

from conftest import catalog_of, record


def oracle_cv(values):
    return statistics.stdev(values) / statistics.mean(values)


def two_point_cv(a, b):
    return math.sqrt(2) * abs(a - b) / (a + b)


def trials(model_id, query_id, thinking):
    return [
        record(model_id, "AIME", query_id, prompt=100, output=t + 10, thinking=t, trial=i)
        for i, t in enumerate(thinking)
    ]


def test_constant_group():
    s = describe([5, 5, 5])
    assert (s.cv, s.max_min_ratio, s.sample_std) == (0.0, 1.0, 0.0)


def test_two_points_hand_values():
    s = describe([2, 4])
    assert s.mean == 3
    assert s.sample_std == pytest.approx(1.4142, abs=1e-4)
    assert s.cv == pytest.approx(0.4714, abs=1e-4)
    assert s.max_min_ratio == 2.0


def test_wide_gap_ratio():
    assert describe([562, 11000]).max_min_ratio == pytest.approx(19.57, abs=0.01)


@pytest.mark.parametrize("values,msg", [([1], "at least 2"), ([0, 0], "zero mean"), ([0, 4], "zero minimum")])
def test_describe_errors(values, msg):
    with pytest.raises(StatisticsError, match=msg):
        describe(values)


def test_repeated_trial_index_rejected():
    with pytest.raises(InputError):
        TrialGroup("m", "d", "q", (Observation(0, 1), Observation(0, 2)))


def test_summary_hand_values():
    ledger = Ledger(trials("m", "a", [2, 4]) + trials("m", "b", [3, 3]))
    s = model_variance_summary(ledger, "m")
    assert s.mean_cv == pytest.approx((0.4714045 + 0) / 2, abs=1e-6)
    assert s.max_ratio == 2.0
    single = model_variance_summary(Ledger(trials("m", "a", [5, 5, 5])), "m")
    assert (single.mean_cv, single.max_ratio) == (0.0, 1.0)


def test_summary_errors():
    ledger = Ledger(trials("m", "a", [5]))
    with pytest.raises(InputError, match="no repeated trials"):
        model_variance_summary(ledger, "m")
    with pytest.raises(InputError, match="catalog"):
        model_variance_summary(Ledger(trials("m", "a", [2, 4])), "m", Metric.COST)


def test_cost_metric_uses_catalog():
    ledger = Ledger(trials("m", "a", [100, 300]))
    cat = catalog_of({"m": (1, 2)})
    (g,) = trial_groups(ledger, catalog=cat)
    costs = [(100 * 1 + (t + 10) * 2) / 1e6 for t in (100, 300)]
    assert within_query_stats(g, "cost").cv == pytest.approx(oracle_cv(costs), rel=1e-12)
    assert within_query_stats(g, "tokens").cv == pytest.approx(two_point_cv(100, 300), rel=1e-12)


def test_calibrated_fixture_reproduces_target():
    ledger = Ledger(fixtures.synthetic_trials("X", 0.29, seed=11))
    s = model_variance_summary(ledger, "X")
    assert len(s.per_query) == 30
    assert s.mean_cv == pytest.approx(0.29, abs=1e-6)
    # oracle path over the same records
    by_query = {}
    for r in ledger:
        by_query.setdefault(r.query_id, []).append(r.thinking_tokens)
    assert s.mean_cv == pytest.approx(statistics.fmean(oracle_cv(v) for v in by_query.values()), abs=1e-12)


def test_bundled_trials_fixture():
    ledger = fixtures.trials_ledger()
    for model, target in fixtures.TRIAL_TARGET_CV.items():
        assert model_variance_summary(ledger, model).mean_cv == pytest.approx(target, abs=1e-6)


positive = st.integers(1, 10**6)


@settings(max_examples=300, deadline=None)
@given(st.lists(positive, min_size=2, max_size=8))
def test_matches_statistics_oracle(values):
    s = describe(values)
    assert s.cv == pytest.approx(oracle_cv(values), rel=1e-9, abs=1e-15)
    assert s.max_min_ratio == max(values) / min(values) >= 1
    assert statistics.fmean(s.normalized_values) == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=300, deadline=None)
@given(positive, positive)
def test_two_point_closed_form(a, b):
    assert describe([a, b]).cv == pytest.approx(two_point_cv(a, b), rel=1e-12, abs=1e-15)


@settings(max_examples=300, deadline=None)
@given(st.lists(positive, min_size=2, max_size=8), st.sampled_from([0.5, 3, 10]))
def test_scale_invariance_is_exact(values, lam):
    a, b = describe(values), describe([v * lam for v in values])
    assert (a.cv, a.max_min_ratio, a.normalized_values) == (b.cv, b.max_min_ratio, b.normalized_values)


@settings(max_examples=200, deadline=None)
@given(st.lists(positive, min_size=2, max_size=8))
def test_duplicate_max_never_lowers_ratio(values):
    assert describe(values + [max(values)]).max_min_ratio >= describe(values).max_min_ratio
