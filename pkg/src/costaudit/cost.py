"""Query and workload cost, with and without thinking tokens.

A query costs ``input_price * prompt_tokens + output_price * output_tokens``
(prices per token). Thinking tokens are part of ``output_tokens`` and billed
at the output rate; the ablated cost drops them.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable

from .catalog import MTOK, ModelPricing, PricingCatalog
from .errors import EmptyCellError, ModelMismatchError, StatisticsError
from .ledger import Ledger, UsageRecord


class Scope(str, enum.Enum):
    QUERY = "query"
    DATASET = "dataset"
    WORKLOAD = "workload"


class CostMode(str, enum.Enum):
    ACTUAL = "actual"
    ABLATED = "ablated"


class ShareVariant(str, enum.Enum):
    TOKENS = "tokens"
    COST = "cost"


@dataclass(frozen=True)
class CostBreakdown:
    model_id: str
    scope: Scope
    prompt_cost: float
    thinking_cost: float
    generation_cost: float
    prompt_tokens: int = 0
    thinking_tokens: int = 0
    generation_tokens: int = 0

    @property
    def total_cost(self) -> float:
        return math.fsum((self.prompt_cost, self.thinking_cost, self.generation_cost))

    @property
    def output_tokens(self) -> int:
        return self.thinking_tokens + self.generation_tokens


def _check_model(pricing: ModelPricing, record: UsageRecord) -> None:
    if record.model_id != pricing.model_id:
        raise ModelMismatchError(
            f"record {record.record_id!r} is for {record.model_id!r}, pricing is for {pricing.model_id!r}"
        )


def _usd(price_per_mtok, tokens: int) -> float:
    return float(price_per_mtok) * tokens / MTOK


def query_cost(pricing: ModelPricing, record: UsageRecord) -> float:
    _check_model(pricing, record)
    return _usd(pricing.input_price_per_mtok, record.prompt_tokens) + _usd(
        pricing.output_price_per_mtok, record.output_tokens
    )


def ablated_cost(pricing: ModelPricing, record: UsageRecord) -> float:
    """Cost with thinking tokens priced at zero."""
    _check_model(pricing, record)
    return _usd(pricing.input_price_per_mtok, record.prompt_tokens) + _usd(
        pricing.output_price_per_mtok, record.generation_tokens
    )


def record_cost(pricing: ModelPricing, record: UsageRecord, mode: CostMode | str = CostMode.ACTUAL) -> float:
    if CostMode(mode) is CostMode.ABLATED:
        return ablated_cost(pricing, record)
    return query_cost(pricing, record)


def _cell(ledger: Ledger, model_id: str, dataset_id: str) -> list[UsageRecord]:
    records = ledger.cell(model_id, dataset_id)
    if not records:
        raise EmptyCellError(f"no original-trial records for ({model_id!r}, {dataset_id!r})")
    return records


def dataset_cost(
    pricing: ModelPricing,
    ledger: Ledger,
    dataset_id: str,
    mode: CostMode | str = CostMode.ACTUAL,
) -> float:
    """Sum of per-query cost over original-trial records of one (model, dataset) cell."""
    records = _cell(ledger, pricing.model_id, dataset_id)
    return math.fsum(record_cost(pricing, r, mode) for r in records)


def cost_matrix(
    catalog: PricingCatalog,
    ledger: Ledger,
    mode: CostMode | str = CostMode.ACTUAL,
) -> dict[str, dict[str, float]]:
    """``{dataset_id: {model_id: cost}}`` for every populated cell."""
    ledger.check_priced(catalog)
    out: dict[str, dict[str, float]] = {}
    for dataset_id in ledger.dataset_ids:
        row = {}
        for model_id in ledger.model_ids:
            if ledger.cell(model_id, dataset_id):
                row[model_id] = dataset_cost(catalog[model_id], ledger, dataset_id, mode)
        out[dataset_id] = row
    return out


def workload_cost(
    pricing: ModelPricing,
    ledger: Ledger,
    dataset_ids: Iterable[str] | None = None,
    mode: CostMode | str = CostMode.ACTUAL,
) -> float:
    datasets = ledger.dataset_ids if dataset_ids is None else list(dataset_ids)
    return math.fsum(
        dataset_cost(pricing, ledger, d, mode)
        for d in datasets
        if ledger.cell(pricing.model_id, d)
    )


def cost_breakdown(
    pricing: ModelPricing,
    records: Iterable[UsageRecord],
    scope: Scope | str = Scope.WORKLOAD,
) -> CostBreakdown:
    """Split cost into prompt, thinking and visible-generation parts."""
    n_in = n_think = n_gen = 0
    for r in records:
        _check_model(pricing, r)
        n_in += r.prompt_tokens
        n_think += r.thinking_tokens
        n_gen += r.generation_tokens
    return CostBreakdown(
        model_id=pricing.model_id,
        scope=Scope(scope),
        prompt_cost=_usd(pricing.input_price_per_mtok, n_in),
        thinking_cost=_usd(pricing.output_price_per_mtok, n_think),
        generation_cost=_usd(pricing.output_price_per_mtok, n_gen),
        prompt_tokens=n_in,
        thinking_tokens=n_think,
        generation_tokens=n_gen,
    )


def thinking_share(breakdown: CostBreakdown, variant: ShareVariant | str = ShareVariant.TOKENS) -> float:
    """Thinking fraction of output tokens, or of total cost."""
    if ShareVariant(variant) is ShareVariant.COST:
        total = breakdown.total_cost
        if total <= 0:
            raise StatisticsError("thinking share undefined: total cost is zero")
        return breakdown.thinking_cost / total
    if breakdown.output_tokens <= 0:
        raise StatisticsError("thinking share undefined: no output tokens")
    return breakdown.thinking_tokens / breakdown.output_tokens
