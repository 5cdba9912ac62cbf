"""Bundled reference data and the synthetic ledgers built from it.

The reference measurements publish per-(model, dataset) totals only: actual
cost in USD and thinking tokens in thousands. :func:`build_aggregate_ledger`
turns each table cell into one synthetic record flagged ``aggregate`` whose
token counts reproduce both numbers, so table-level analyses run through the
ordinary ledger and cost code paths.

Only the thinking count and the total cost of a cell are published. The
non-thinking remainder is split evenly (by cost) between prompt and visible
generation tokens; that split affects :func:`costaudit.cost.cost_breakdown`
on this fixture but nothing else.

Run ``python -m costaudit.fixtures`` to regenerate the derived files.
"""

from __future__ import annotations

import csv
import datetime as dt
from decimal import ROUND_HALF_EVEN, Decimal
from importlib import resources
from pathlib import Path

import numpy as np

from .catalog import MTOK, PricingCatalog, load_catalog
from .ledger import Ledger, UsageRecord, ingest_records, write_records
from .predict.embeddings import EmbeddingCache, content_hash

DATA = resources.files("costaudit") / "data"

CATALOG_FILE = "pricing_2026-02-28.csv"
COST_TABLE_FILE = "actual_cost_usd.csv"
THINKING_TABLE_FILE = "thinking_tokens_thousands.csv"
AGGREGATE_LEDGER_FILE = "aggregate_ledger.jsonl"
TRIALS_FILE = "repeated_trials_synthetic.jsonl"
DEMO_LEDGER_FILE = "demo_queries.jsonl"
DEMO_EMBEDDINGS_FILE = "demo_embeddings.tsv"
MAE_REFERENCE_FILE = "prediction_mae_reference.csv"

# mean within-query thinking-token CV per model in the repeated-trial study
TRIAL_TARGET_CV = {"GPT-5.2": 0.24, "GPT-5 Mini": 0.38, "Gemini 3 Flash": 0.13}


def data_path(name: str) -> Path:
    return Path(str(DATA / name))


def reference_catalog() -> PricingCatalog:
    return load_catalog(data_path(CATALOG_FILE))


def _read_table(name: str) -> dict[str, dict[str, Decimal]]:
    with open(data_path(name), newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        return {
            row["model_id"]: {k: Decimal(v) for k, v in row.items() if k != "model_id"}
            for row in reader
        }


def cost_table() -> dict[str, dict[str, Decimal]]:
    """Published total cost per model and dataset, USD."""
    return _read_table(COST_TABLE_FILE)


def thinking_table() -> dict[str, dict[str, Decimal]]:
    """Published total thinking tokens per model and dataset, in thousands."""
    return _read_table(THINKING_TABLE_FILE)


def mae_reference() -> dict[str, dict[str, float]]:
    """Reference per-model MAE values. Not reproducible without the raw corpus."""
    return {m: {k: float(v) for k, v in row.items()} for m, row in _read_table(MAE_REFERENCE_FILE).items()}


def _to_int(x: Decimal) -> int:
    return int(x.quantize(Decimal(1), rounding=ROUND_HALF_EVEN))


def cell_tokens(
    cost_usd: Decimal, thinking_k: Decimal, input_price: Decimal, output_price: Decimal
) -> tuple[int, int, int]:
    """Integer ``(prompt, output, thinking)`` counts reproducing one table cell."""
    thinking = _to_int(thinking_k * 1000)
    micro = cost_usd * MTOK
    remainder = micro - output_price * thinking
    if remainder < 0:
        raise ValueError("cell cost is below its thinking-token cost")
    generation = _to_int(remainder / 2 / output_price) if output_price else 0
    output = thinking + generation
    prompt = _to_int((micro - output_price * output) / input_price) if input_price else 0
    return max(prompt, 0), output, thinking


def build_aggregate_ledger(
    catalog: PricingCatalog | None = None,
    costs: dict[str, dict[str, Decimal]] | None = None,
    thinking: dict[str, dict[str, Decimal]] | None = None,
) -> list[UsageRecord]:
    catalog = catalog or reference_catalog()
    costs = costs or cost_table()
    thinking = thinking or thinking_table()
    records = []
    for model_id, row in costs.items():
        p = catalog[model_id]
        for dataset_id, usd in row.items():
            n_in, n_out, n_think = cell_tokens(
                usd, thinking[model_id][dataset_id], p.input_price_per_mtok, p.output_price_per_mtok
            )
            records.append(
                UsageRecord(
                    record_id=f"agg:{model_id}:{dataset_id}",
                    model_id=model_id,
                    dataset_id=dataset_id,
                    query_id="__total__",
                    prompt_tokens=n_in,
                    output_tokens=n_out,
                    thinking_tokens=n_think,
                    aggregate=True,
                )
            )
    return records


def reference_ledger() -> Ledger:
    return ingest_records(data_path(AGGREGATE_LEDGER_FILE))


def trials_ledger() -> Ledger:
    return ingest_records(data_path(TRIALS_FILE))


def demo_ledger() -> Ledger:
    return ingest_records(data_path(DEMO_LEDGER_FILE))


def _standardized(rng: np.random.Generator, k: int, scale: float) -> np.ndarray:
    # zero mean, unit sample std; redraw until every value stays well above zero
    while True:
        z = rng.standard_normal(k)
        z = (z - z.mean()) / z.std(ddof=1)
        if 1 + scale * z.min() >= 0.15:
            return z


def _cvs(groups: np.ndarray) -> np.ndarray:
    return groups.std(axis=1, ddof=1) / groups.mean(axis=1)


def _calibrate(groups: np.ndarray, target: float, tol: float = 1e-8, max_steps: int = 2000) -> None:
    """Nudge single counts by one token until the mean CV is within ``tol``.

    Integer rounding leaves the mean CV a few 1e-6 off target; greedy unit
    steps on individual observations close that gap in place.
    """
    n, k = groups.shape
    for _ in range(max_steps):
        cvs = _cvs(groups)
        err = cvs.mean() - target
        if abs(err) <= tol:
            return
        best = (abs(err), None)
        for q in range(n):
            for t in range(k):
                for step in (-1, 1):
                    row = groups[q].copy()
                    row[t] += step
                    if row[t] <= 0:
                        continue
                    cv = row.std(ddof=1) / row.mean()
                    e = abs(err + (cv - cvs[q]) / n)
                    if e < best[0]:
                        best = (e, (q, t, step))
        if best[1] is None:
            return
        q, t, step = best[1]
        groups[q, t] += step


def synthetic_trials(
    model_id: str,
    target_cv: float,
    *,
    n_queries: int = 30,
    k: int = 6,
    dataset_id: str = "AIME",
    base_thinking: float = 12_000.0,
    seed: int = 0,
) -> list[UsageRecord]:
    """Repeated-trial records whose mean thinking-token CV is ``target_cv``.

    Each query gets a per-query CV around the target (rescaled so their mean
    hits it before integer rounding), and ``k`` standardized draws scaled to
    that CV around a query-specific mean. After rounding, single-token
    adjustments bring the mean CV back to ``target_cv`` within 1e-8.
    """
    rng = np.random.default_rng(seed)
    weights = rng.uniform(0.6, 1.4, n_queries)
    scales = target_cv * weights / weights.mean()
    draws = []
    for qi in range(n_queries):
        mu = base_thinking * float(np.exp(rng.normal(0.0, 0.5)))
        z = _standardized(rng, k, float(scales[qi]))
        draws.append(np.rint(mu * (1 + scales[qi] * z)).astype(np.int64))
    groups = np.vstack(draws)
    _calibrate(groups, target_cv)
    records = []
    t0 = dt.datetime(2026, 3, 2, tzinfo=dt.timezone.utc)
    for qi in range(n_queries):
        qid = f"{dataset_id.lower()}-{qi:03d}"
        thinking = groups[qi]
        prompt = int(rng.integers(120, 400))
        for t in range(k):
            visible = int(rng.integers(200, 900))
            records.append(
                UsageRecord(
                    record_id=f"trial:{model_id}:{qid}:{t}",
                    model_id=model_id,
                    dataset_id=dataset_id,
                    query_id=qid,
                    trial_index=t,
                    prompt_tokens=prompt,
                    output_tokens=int(thinking[t]) + visible,
                    thinking_tokens=int(thinking[t]),
                    timestamp=t0 + dt.timedelta(days=t, minutes=qi),
                )
            )
    return records


def build_trials_fixture(seed: int = 2026) -> list[UsageRecord]:
    records: list[UsageRecord] = []
    for i, (model_id, cv) in enumerate(TRIAL_TARGET_CV.items()):
        records += synthetic_trials(model_id, cv, seed=seed + i)
    return records


DEMO_DATASETS = ("AIME", "GPQA", "SimpleQA")


def build_demo_corpus(
    catalog: PricingCatalog | None = None,
    *,
    queries_per_dataset: int = 20,
    dim: int = 16,
    seed: int = 7,
) -> tuple[list[UsageRecord], dict[str, tuple[float, ...]]]:
    """Small per-query corpus with text and embeddings for the predictors.

    Each query has a latent difficulty that drives thinking tokens and is
    also encoded along one embedding direction, so nearest neighbors carry
    real signal.
    """
    catalog = catalog or reference_catalog()
    rng = np.random.default_rng(seed)
    appetite = {m: float(np.exp(rng.normal(0.0, 0.8))) for m in catalog.model_ids}
    appetite["Claude Haiku 4.5"] = 0.0
    direction = rng.standard_normal(dim)
    records, embeddings = [], {}
    for d_idx, dataset_id in enumerate(DEMO_DATASETS):
        center = rng.standard_normal(dim) * 2.0
        for qi in range(queries_per_dataset):
            qid = f"{dataset_id.lower()}-{qi:03d}"
            difficulty = float(rng.uniform(0.0, 1.0))
            text = f"[{dataset_id}] question {qi}: difficulty tier {difficulty:.3f}"
            vec = center + difficulty * 3.0 * direction + rng.normal(0.0, 0.3, dim)
            embeddings[text] = tuple(float(v) for v in vec)
            prompt = int(rng.integers(80, 1200))
            for model_id in catalog.model_ids:
                think = int(appetite[model_id] * (300 + 9000 * difficulty ** 2) * rng.lognormal(0, 0.35))
                visible = int(rng.integers(50, 600))
                records.append(
                    UsageRecord(
                        record_id=f"demo:{model_id}:{qid}",
                        model_id=model_id,
                        dataset_id=dataset_id,
                        query_id=qid,
                        prompt_tokens=prompt,
                        output_tokens=think + visible,
                        thinking_tokens=think,
                        query_text=text,
                    )
                )
    return records, embeddings


def write_embedding_cache(embeddings: dict[str, tuple[float, ...]], path: Path) -> None:
    path.unlink(missing_ok=True)
    cache = EmbeddingCache(path)
    for text, vec in embeddings.items():
        cache.put(content_hash(text), vec)


def regenerate(out_dir: Path | None = None) -> None:
    out = out_dir or data_path("")
    write_records(build_aggregate_ledger(), out / AGGREGATE_LEDGER_FILE)
    write_records(build_trials_fixture(), out / TRIALS_FILE)
    records, embeddings = build_demo_corpus()
    write_records(records, out / DEMO_LEDGER_FILE)
    write_embedding_cache(embeddings, out / DEMO_EMBEDDINGS_FILE)


if __name__ == "__main__":
    regenerate()
