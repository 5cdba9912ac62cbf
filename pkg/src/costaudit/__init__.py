"""Cost auditing for reasoning-model APIs.

Actual cost comes from recorded token usage priced against a dated catalog.
On top of that the package finds model pairs whose listed-price order
disagrees with their cost order and measures how much of the disagreement
thinking tokens explain. Separate modules cover run-to-run variance of the
same query and simple per-query cost predictors.
"""

from .catalog import ModelPricing, PricingCatalog, listed_price, load_catalog
from .cost import (
    CostBreakdown,
    CostMode,
    Scope,
    ablated_cost,
    cost_breakdown,
    cost_matrix,
    dataset_cost,
    query_cost,
    thinking_share,
    workload_cost,
)
from .ledger import AggregateUsage, Ledger, TrialFilter, UsageRecord, aggregate_usage, ingest_records
from .ranking import (
    RankingComparison,
    ReversalPair,
    ablation_report,
    compare_rankings,
    find_reversals,
    kendall_tau,
    pooled_comparison,
    rank_models,
    reversal_severity,
)
from .variance import TrialGroup, WithinQueryStats, model_variance_summary, within_query_stats

__version__ = "0.1.0"

__all__ = [
    "AggregateUsage",
    "CostBreakdown",
    "CostMode",
    "Ledger",
    "ModelPricing",
    "PricingCatalog",
    "RankingComparison",
    "ReversalPair",
    "Scope",
    "TrialFilter",
    "TrialGroup",
    "UsageRecord",
    "WithinQueryStats",
    "ablated_cost",
    "ablation_report",
    "aggregate_usage",
    "compare_rankings",
    "cost_breakdown",
    "cost_matrix",
    "dataset_cost",
    "find_reversals",
    "ingest_records",
    "kendall_tau",
    "listed_price",
    "load_catalog",
    "model_variance_summary",
    "pooled_comparison",
    "query_cost",
    "rank_models",
    "reversal_severity",
    "thinking_share",
    "within_query_stats",
    "workload_cost",
]
