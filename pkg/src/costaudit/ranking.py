"""Listed-price rankings versus actual-cost rankings.

A *reversal* is an unordered model pair where the model with the strictly
lower listed price has the strictly higher cost. Kendall's tau here is the
tau-a variant: ``(concordant - discordant) / C(n, 2)``, tied pairs counting
as neither.
"""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass, field
from decimal import Decimal
from fractions import Fraction
from itertools import combinations
from typing import Mapping, Sequence

from .catalog import PricingCatalog
from .cost import CostMode, cost_matrix
from .errors import InputError, InvariantViolation, UnknownModelError
from .ledger import Ledger

ALL_TASKS = "ALL"
WORKLOAD = "WORKLOAD"

Number = float | int | Decimal


@dataclass(frozen=True)
class ReversalPair:
    cheaper_listed_model: str
    pricier_listed_model: str
    cheaper_listed_price: Decimal
    pricier_listed_price: Decimal
    cheaper_listed_cost: float
    pricier_listed_cost: float

    @property
    def price_ratio(self) -> float:
        return float(self.pricier_listed_price / self.cheaper_listed_price)

    @property
    def cost_ratio(self) -> float:
        return self.cheaper_listed_cost / self.pricier_listed_cost


@dataclass(frozen=True)
class RankingComparison:
    task_id: str
    cost_mode: CostMode
    price_ranking: list[str]
    cost_ranking: list[str]
    reversal_pairs: list[ReversalPair]
    kendall_tau: float
    costs: dict[str, float] = field(default_factory=dict)

    @property
    def reversal_count(self) -> int:
        return len(self.reversal_pairs)

    @property
    def pair_count(self) -> int:
        return math.comb(len(self.price_ranking), 2)

    @property
    def reversal_rate(self) -> float:
        return self.reversal_count / self.pair_count


@dataclass(frozen=True)
class PooledComparison:
    """Per-task comparisons counted together, each task contributing C(n, 2) pairs."""

    cost_mode: CostMode
    tasks: list[RankingComparison]

    @property
    def reversal_count(self) -> int:
        return sum(t.reversal_count for t in self.tasks)

    @property
    def pair_count(self) -> int:
        return sum(t.pair_count for t in self.tasks)

    @property
    def reversal_rate(self) -> float:
        return self.reversal_count / self.pair_count

    @property
    def mean_tau(self) -> float:
        return statistics.fmean(t.kendall_tau for t in self.tasks)

    @property
    def mean_reversals(self) -> float:
        return statistics.fmean(t.reversal_count for t in self.tasks)


@dataclass(frozen=True)
class AblationRow:
    task_id: str
    tau_actual: float
    tau_ablated: float
    reversals_actual: int
    reversals_ablated: int


@dataclass(frozen=True)
class AblationReport:
    rows: list[AblationRow]

    @property
    def mean_tau_actual(self) -> float:
        return statistics.fmean(r.tau_actual for r in self.rows)

    @property
    def mean_tau_ablated(self) -> float:
        return statistics.fmean(r.tau_ablated for r in self.rows)

    @property
    def mean_reversals_actual(self) -> float:
        return statistics.fmean(r.reversals_actual for r in self.rows)

    @property
    def mean_reversals_ablated(self) -> float:
        return statistics.fmean(r.reversals_ablated for r in self.rows)


def _check_finite(values: Mapping[str, Number]) -> None:
    for k, v in values.items():
        if not math.isfinite(float(v)):
            raise InputError(f"non-finite value for {k!r}: {v}")


def rank_models(values: Mapping[str, Number]) -> list[str]:
    """Model ids in ascending order of value, ties broken by model id."""
    if not values:
        raise InputError("cannot rank an empty set of models")
    _check_finite(values)
    return sorted(values, key=lambda m: (values[m], m))


def _sign(x: Number) -> int:
    return (x > 0) - (x < 0)


def kendall_tau(ranking_a: Sequence[str], ranking_b: Sequence[str]) -> float:
    """Tau-a between two orderings of the same items."""
    if len(ranking_a) != len(set(ranking_a)) or len(ranking_b) != len(set(ranking_b)):
        raise InputError("rankings must not contain repeated items")
    if set(ranking_a) != set(ranking_b):
        raise InputError("rankings are not permutations of the same set")
    if len(ranking_a) < 2:
        raise InputError("kendall tau needs at least two items")
    pos_a = {m: i for i, m in enumerate(ranking_a)}
    pos_b = {m: i for i, m in enumerate(ranking_b)}
    return kendall_tau_values(pos_a, pos_b)


def kendall_tau_values(x: Mapping[str, Number], y: Mapping[str, Number]) -> float:
    """Tau-a over paired values keyed by item; ties contribute zero."""
    return float(kendall_tau_fraction(x, y))


def kendall_tau_fraction(x: Mapping[str, Number], y: Mapping[str, Number]) -> Fraction:
    if set(x) != set(y):
        raise InputError("value maps cover different items")
    items = sorted(x)
    n = len(items)
    if n < 2:
        raise InputError("kendall tau needs at least two items")
    s = 0
    for a, b in combinations(items, 2):
        s += _sign(x[a] - x[b]) * _sign(y[a] - y[b])
    return Fraction(s, math.comb(n, 2))


def find_reversals(catalog: PricingCatalog, costs: Mapping[str, float]) -> list[ReversalPair]:
    """All pairs whose listed-price order and cost order strictly disagree.

    Output is sorted by (cheaper model, pricier model) so it does not depend
    on the iteration order of ``costs``.
    """
    prices = {}
    for m in costs:
        if m not in catalog:
            raise UnknownModelError(m)
        prices[m] = catalog[m].listed_price
    _check_finite(costs)
    pairs = []
    for a, b in combinations(sorted(costs), 2):
        if prices[a] == prices[b]:
            continue
        cheap, dear = (a, b) if prices[a] < prices[b] else (b, a)
        if costs[cheap] > costs[dear]:
            pairs.append(
                ReversalPair(cheap, dear, prices[cheap], prices[dear], costs[cheap], costs[dear])
            )
    pairs.sort(key=lambda p: (p.cheaper_listed_model, p.pricier_listed_model))
    return pairs


def reversal_severity(pair: ReversalPair) -> tuple[float, float]:
    return pair.price_ratio, pair.cost_ratio


def compare_costs(
    catalog: PricingCatalog,
    costs: Mapping[str, float],
    task_id: str,
    cost_mode: CostMode | str = CostMode.ACTUAL,
) -> RankingComparison:
    prices = {m: catalog[m].listed_price for m in costs}
    reversals = find_reversals(catalog, costs)
    tau = kendall_tau_fraction(prices, costs)
    comp = RankingComparison(
        task_id=task_id,
        cost_mode=CostMode(cost_mode),
        price_ranking=rank_models(prices),
        cost_ranking=rank_models(costs),
        reversal_pairs=reversals,
        kendall_tau=float(tau),
        costs=dict(costs),
    )
    untied = len(set(prices.values())) == len(prices) and len(set(costs.values())) == len(costs)
    if untied and tau != 1 - Fraction(2 * comp.reversal_count, comp.pair_count):
        raise InvariantViolation(f"tau/reversal identity broken on task {task_id!r}")
    return comp


def compare_rankings(
    catalog: PricingCatalog,
    ledger: Ledger,
    task_id: str,
    cost_mode: CostMode | str = CostMode.ACTUAL,
) -> RankingComparison:
    """Compare listed-price order with dataset cost order on one task.

    ``task_id`` may also be ``"WORKLOAD"`` to rank by cost summed over every
    task. For the pooled per-task view use :func:`pooled_comparison`.
    """
    if task_id == ALL_TASKS:
        raise InputError("use pooled_comparison for task 'ALL'")
    matrix = cost_matrix(catalog, ledger, cost_mode)
    if task_id == WORKLOAD:
        per_model: dict[str, list[float]] = {}
        for row in matrix.values():
            for m, c in row.items():
                per_model.setdefault(m, []).append(c)
        costs = {m: math.fsum(v) for m, v in per_model.items()}
    elif task_id in matrix:
        costs = matrix[task_id]
    else:
        raise InputError(f"unknown task id {task_id!r}; known: {', '.join(matrix)}")
    if len(costs) < 2:
        raise InputError(f"task {task_id!r} has fewer than two models")
    return compare_costs(catalog, costs, task_id, cost_mode)


def pooled_comparison(
    catalog: PricingCatalog, ledger: Ledger, cost_mode: CostMode | str = CostMode.ACTUAL
) -> PooledComparison:
    matrix = cost_matrix(catalog, ledger, cost_mode)
    tasks = [
        compare_costs(catalog, matrix[t], t, cost_mode) for t in sorted(matrix) if len(matrix[t]) >= 2
    ]
    if not tasks:
        raise InputError("no task has two or more models")
    return PooledComparison(CostMode(cost_mode), tasks)


def ablation_report(catalog: PricingCatalog, ledger: Ledger) -> AblationReport:
    actual = pooled_comparison(catalog, ledger, CostMode.ACTUAL)
    ablated = {t.task_id: t for t in pooled_comparison(catalog, ledger, CostMode.ABLATED).tasks}
    rows = [
        AblationRow(
            task_id=t.task_id,
            tau_actual=t.kendall_tau,
            tau_ablated=ablated[t.task_id].kendall_tau,
            reversals_actual=t.reversal_count,
            reversals_ablated=ablated[t.task_id].reversal_count,
        )
        for t in actual.tasks
    ]
    return AblationReport(rows)
