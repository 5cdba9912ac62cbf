"""Within-query variability across repeated trials of the same query."""

from __future__ import annotations

import enum
import math
import statistics
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .catalog import PricingCatalog
from .cost import query_cost
from .errors import InputError, StatisticsError
from .ledger import Ledger


class Metric(str, enum.Enum):
    THINKING_TOKENS = "thinking_tokens"
    COST = "cost"

    @classmethod
    def parse(cls, value: str | Metric) -> Metric:
        if value == "tokens":
            return cls.THINKING_TOKENS
        return cls(value)


@dataclass(frozen=True)
class Observation:
    trial_index: int
    thinking_tokens: int
    cost: float | None = None


@dataclass(frozen=True)
class TrialGroup:
    model_id: str
    dataset_id: str
    query_id: str
    observations: tuple[Observation, ...]

    def __post_init__(self) -> None:
        indices = [o.trial_index for o in self.observations]
        if len(set(indices)) != len(indices):
            raise InputError(f"repeated trial index in group {self.query_id!r}")

    def values(self, metric: Metric | str) -> list[float]:
        metric = Metric.parse(metric)
        if metric is Metric.THINKING_TOKENS:
            return [float(o.thinking_tokens) for o in self.observations]
        if any(o.cost is None for o in self.observations):
            raise InputError("group carries no costs; build it with a catalog")
        return [o.cost for o in self.observations]  # type: ignore[misc]


@dataclass(frozen=True)
class WithinQueryStats:
    mean: float
    sample_std: float
    cv: float
    max_min_ratio: float
    normalized_values: tuple[float, ...]
    k: int


def describe(values: Sequence[float]) -> WithinQueryStats:
    """Mean, sample std (k-1 denominator), CV, max/min and mean-normalized values.

    Moments are accumulated as exact fractions and rounded once at the end, so
    rescaling the inputs by a factor that keeps them exactly representable
    leaves ``cv``, ``max_min_ratio`` and ``normalized_values`` bit-identical.
    """
    k = len(values)
    if k < 2:
        raise StatisticsError("need at least 2 observations")
    exact = [Fraction(v) for v in values]
    mean = sum(exact) / k
    if mean <= 0:
        raise StatisticsError("zero mean: coefficient of variation undefined")
    lo, hi = min(exact), max(exact)
    if lo <= 0:
        raise StatisticsError("zero minimum: max/min ratio undefined")
    var = sum((v - mean) ** 2 for v in exact) / (k - 1)
    return WithinQueryStats(
        mean=float(mean),
        sample_std=math.sqrt(var),
        cv=math.sqrt(var / mean**2),
        max_min_ratio=float(hi / lo),
        normalized_values=tuple(float(v / mean) for v in exact),
        k=k,
    )


def within_query_stats(group: TrialGroup, metric: Metric | str = Metric.THINKING_TOKENS) -> WithinQueryStats:
    return describe(group.values(metric))


def trial_groups(
    ledger: Ledger, model_id: str | None = None, catalog: PricingCatalog | None = None
) -> list[TrialGroup]:
    """Groups of two or more trials per (model, dataset, query)."""
    groups = []
    for m, d, q in ledger.query_keys():
        if model_id is not None and m != model_id:
            continue
        records = ledger.trials(m, d, q)
        if len(records) < 2:
            continue
        pricing = catalog[m] if catalog is not None else None
        obs = tuple(
            Observation(
                r.trial_index,
                r.thinking_tokens,
                query_cost(pricing, r) if pricing is not None else None,
            )
            for r in sorted(records, key=lambda r: r.trial_index)
        )
        groups.append(TrialGroup(m, d, q, obs))
    return groups


@dataclass(frozen=True)
class QueryVariance:
    dataset_id: str
    query_id: str
    stats: WithinQueryStats


@dataclass(frozen=True)
class VarianceSummary:
    model_id: str
    metric: Metric
    mean_cv: float
    max_ratio: float
    mean_ratio: float
    per_query: list[QueryVariance]


def model_variance_summary(
    ledger: Ledger,
    model_id: str,
    metric: Metric | str = Metric.THINKING_TOKENS,
    catalog: PricingCatalog | None = None,
) -> VarianceSummary:
    metric = Metric.parse(metric)
    if metric is Metric.COST and catalog is None:
        raise InputError("cost metric needs a pricing catalog")
    groups = trial_groups(ledger, model_id, catalog)
    if not groups:
        raise InputError(f"no repeated trials for model {model_id!r}")
    per_query = [QueryVariance(g.dataset_id, g.query_id, within_query_stats(g, metric)) for g in groups]
    ratios = [p.stats.max_min_ratio for p in per_query]
    return VarianceSummary(
        model_id=model_id,
        metric=metric,
        mean_cv=statistics.fmean(p.stats.cv for p in per_query),
        max_ratio=max(ratios),
        mean_ratio=statistics.fmean(ratios),
        per_query=per_query,
    )

