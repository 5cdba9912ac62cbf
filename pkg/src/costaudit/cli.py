"""Command-line entry point: ``costaudit <command> [options]``.

Exit codes: 0 success, 1 bad input, 2 internal invariant violation.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path
from typing import Callable

from . import fixtures
from .catalog import PricingCatalog, load_catalog
from .collect import CollectorConfig, canned_sender, collect, read_queries
from .cost import CostMode, Scope, cost_breakdown, cost_matrix, thinking_share
from .errors import InputError, InvariantViolation
from .ledger import Ledger, dumps_record, ingest_records
from .predict import Baseline, EmbeddingProvider, SplitSpec, evaluate, labeled_queries
from .ranking import ALL_TASKS, ablation_report, compare_rankings, pooled_comparison
from .report import FORMATS, INT, MONEY, RATIO, TEXT, Report, render
from .variance import Metric, model_variance_summary

log = logging.getLogger("costaudit")


class _Parser(argparse.ArgumentParser):
    # usage errors are input errors (exit 1); 2 is reserved for invariant violations
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser, *, ledger: bool = True) -> None:
    p.add_argument("--catalog", type=Path, help="pricing catalog (.csv or .json)")
    if ledger:
        p.add_argument("--ledger", type=Path, help="usage records (.jsonl or .csv)")
    p.add_argument(
        "--paper-fixture",
        action="store_true",
        help="use the bundled reference catalog and ledger",
    )
    p.add_argument("--format", choices=FORMATS, default="json")
    p.add_argument("--decimals", type=int, default=None, help="money decimals in machine output (default 4)")
    p.add_argument("--lenient", action="store_true", help="skip invalid ledger lines instead of failing")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="costaudit", description="Audit reasoning-model API cost against listed prices.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("audit", help="cost per (model, dataset) and per-model totals")
    _common(p)
    p.add_argument("--cost-mode", choices=[m.value for m in CostMode], default="actual")

    p = sub.add_parser("reversals", help="pricing reversals between listed price and cost")
    _common(p)
    p.add_argument("--task", default=ALL_TASKS, help="dataset id, ALL (pooled) or WORKLOAD")
    p.add_argument("--cost-mode", choices=[m.value for m in CostMode], default="actual")

    p = sub.add_parser("ablate", help="ranking agreement with and without thinking-token cost")
    _common(p)

    p = sub.add_parser("breakdown", help="prompt / thinking / generation cost split")
    _common(p)
    p.add_argument("--task", default=None, help="restrict to one dataset")

    p = sub.add_parser("variance", help="within-query variance across repeated trials")
    _common(p)
    p.add_argument("--metric", choices=["tokens", "cost"], default="tokens")
    p.add_argument("--model", default=None, help="only this model")

    p = sub.add_parser("predict", help="evaluate per-query cost predictors")
    _common(p)
    p.add_argument("--baseline", choices=["mean", "lr", "knn"], default="knn")
    p.add_argument("--k", type=int, default=None, help="neighbors for knn (default 5)")
    p.add_argument("--test-ratio", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--distance", choices=["cosine", "euclidean"], default="cosine")
    p.add_argument("--weighted", action="store_true", help="distance-weighted KNN pooling")
    p.add_argument("--embeddings", type=Path, help="embedding cache file")
    p.add_argument("--embedding-url", default=None)
    p.add_argument("--offline", action="store_true", help="never call the embedding endpoint")
    p.add_argument("--per-query", action="store_true", help="include per-query predictions")

    p = sub.add_parser("collect", help="call a chat-completions endpoint and record usage")
    _common(p, ledger=False)
    p.add_argument("--config", type=Path, required=True, help="collector config (JSON)")
    p.add_argument("--queries", type=Path, required=True, help="JSONL with query_id, dataset_id, text")
    p.add_argument("--ledger", type=Path, required=True, help="record file to append to")
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--start-trial", type=int, default=0)
    p.add_argument("--dry-run", type=Path, metavar="DIR", help="read canned responses from DIR")
    p.add_argument("--max-spend", type=float, default=None, help="stop issuing calls past this USD")
    p.add_argument("--keep-text", action="store_true", help="store query text in records")
    return parser


def _load_catalog(args) -> PricingCatalog:
    if args.paper_fixture:
        if args.catalog:
            raise InputError("--paper-fixture conflicts with --catalog")
        return fixtures.reference_catalog()
    if not args.catalog:
        raise InputError("--catalog is required (or use --paper-fixture)")
    return load_catalog(args.catalog)


def _load_ledger(args, fixture: Callable[[], Ledger] = fixtures.reference_ledger) -> Ledger:
    if args.paper_fixture:
        if args.ledger:
            raise InputError("--paper-fixture conflicts with --ledger")
        return fixture()
    if not args.ledger:
        raise InputError("--ledger is required (or use --paper-fixture)")
    ledger = ingest_records(args.ledger, strict=not args.lenient)
    if not len(ledger):
        raise InputError("empty ledger")
    return ledger


def _params(args, *names: str) -> dict:
    out = {"paper_fixture": args.paper_fixture}
    for n in ("catalog", "ledger") + names:
        v = getattr(args, n, None)
        out[n] = str(v) if isinstance(v, Path) else v
    return out


def cmd_audit(args) -> Report:
    catalog = _load_catalog(args)
    ledger = _load_ledger(args)
    mode = CostMode(args.cost_mode)
    matrix = cost_matrix(catalog, ledger, mode)
    datasets = list(matrix)
    models = [m for m in catalog.model_ids if m in ledger.model_ids]
    report = Report("audit", _params(args, "cost_mode"), catalog.snapshot_date)
    table = report.table(
        "cost_usd", [("model_id", TEXT)] + [(d, MONEY) for d in datasets] + [("total", MONEY)]
    )
    totals = report.table(
        "model_totals",
        [("model_id", TEXT), ("listed_price", MONEY), ("total_cost", MONEY), ("datasets", INT)],
    )
    for m in models:
        row = [matrix[d].get(m) for d in datasets]
        total = math.fsum(v for v in row if v is not None)
        table.add(m, *row, total)
        totals.add(m, catalog[m].listed_price, total, sum(v is not None for v in row))
    report.note("cost_mode", mode.value)
    report.note("records", len(ledger), INT)
    return report


def _pairs_table(report: Report, comps) -> None:
    t = report.table(
        "reversal_pairs",
        [
            ("task_id", TEXT),
            ("cheaper_listed_model", TEXT),
            ("pricier_listed_model", TEXT),
            ("price_ratio", RATIO),
            ("cost_ratio", RATIO),
        ],
    )
    for c in comps:
        for p in c.reversal_pairs:
            t.add(c.task_id, p.cheaper_listed_model, p.pricier_listed_model, p.price_ratio, p.cost_ratio)


def cmd_reversals(args) -> Report:
    catalog = _load_catalog(args)
    ledger = _load_ledger(args)
    mode = CostMode(args.cost_mode)
    report = Report("reversals", _params(args, "task", "cost_mode"), catalog.snapshot_date)
    if args.task == ALL_TASKS:
        pooled = pooled_comparison(catalog, ledger, mode)
        t = report.table(
            "per_task",
            [
                ("task_id", TEXT),
                ("reversal_count", INT),
                ("pairs", INT),
                ("reversal_rate", RATIO),
                ("kendall_tau", RATIO),
            ],
        )
        for c in pooled.tasks:
            t.add(c.task_id, c.reversal_count, c.pair_count, c.reversal_rate, c.kendall_tau)
        report.note("reversal_count", pooled.reversal_count, INT)
        report.note("pairs", pooled.pair_count, INT)
        report.note("reversal_rate", pooled.reversal_rate, RATIO)
        report.note("mean_kendall_tau", pooled.mean_tau, RATIO)
        _pairs_table(report, pooled.tasks)
        return report
    comp = compare_rankings(catalog, ledger, args.task, mode)
    report.note("reversal_count", comp.reversal_count, INT)
    report.note("pairs", comp.pair_count, INT)
    report.note("reversal_rate", comp.reversal_rate, RATIO)
    report.note("kendall_tau", comp.kendall_tau, RATIO)
    t = report.table(
        "rankings",
        [("rank", INT), ("by_listed_price", TEXT), ("listed_price", MONEY), ("by_cost", TEXT), ("cost", MONEY)],
    )
    for i, (pm, cm) in enumerate(zip(comp.price_ranking, comp.cost_ranking), start=1):
        t.add(i, pm, catalog[pm].listed_price, cm, comp.costs[cm])
    _pairs_table(report, [comp])
    return report


def cmd_ablate(args) -> Report:
    catalog = _load_catalog(args)
    ledger = _load_ledger(args)
    ab = ablation_report(catalog, ledger)
    report = Report("ablate", _params(args), catalog.snapshot_date)
    t = report.table(
        "per_task",
        [
            ("task_id", TEXT),
            ("tau_actual", RATIO),
            ("tau_ablated", RATIO),
            ("reversals_actual", RATIO),
            ("reversals_ablated", RATIO),
        ],
    )
    for r in ab.rows:
        t.add(r.task_id, r.tau_actual, r.tau_ablated, r.reversals_actual, r.reversals_ablated)
    t.add("AVERAGE", ab.mean_tau_actual, ab.mean_tau_ablated, ab.mean_reversals_actual, ab.mean_reversals_ablated)
    report.note("mean_tau_actual", ab.mean_tau_actual, RATIO)
    report.note("mean_tau_ablated", ab.mean_tau_ablated, RATIO)
    report.note("mean_reversals_actual", ab.mean_reversals_actual, RATIO)
    report.note("mean_reversals_ablated", ab.mean_reversals_ablated, RATIO)
    return report


def cmd_breakdown(args) -> Report:
    catalog = _load_catalog(args)
    ledger = _load_ledger(args)
    ledger.check_priced(catalog)
    if args.task is not None and args.task not in ledger.dataset_ids:
        raise InputError(f"unknown task id {args.task!r}")
    report = Report("breakdown", _params(args, "task"), catalog.snapshot_date)
    t = report.table(
        "breakdown",
        [
            ("model_id", TEXT),
            ("prompt_cost", MONEY),
            ("thinking_cost", MONEY),
            ("generation_cost", MONEY),
            ("total_cost", MONEY),
            ("prompt_tokens", INT),
            ("thinking_tokens", INT),
            ("generation_tokens", INT),
            ("thinking_share_tokens", RATIO),
            ("thinking_share_cost", RATIO),
        ],
    )
    scope = Scope.DATASET if args.task else Scope.WORKLOAD
    for m in [m for m in catalog.model_ids if m in ledger.model_ids]:
        records = ledger.cell(m, args.task) if args.task else [r for r in ledger.for_model(m) if r.trial_index == 0]
        if not records:
            continue
        b = cost_breakdown(catalog[m], records, scope)
        share_t = thinking_share(b, "tokens") if b.output_tokens else None
        share_c = thinking_share(b, "cost") if b.total_cost > 0 else None
        t.add(
            m, b.prompt_cost, b.thinking_cost, b.generation_cost, b.total_cost,
            b.prompt_tokens, b.thinking_tokens, b.generation_tokens, share_t, share_c,
        )
    if any(r.aggregate for r in ledger):
        report.note(
            "note",
            "aggregate fixture: prompt/generation split is synthetic; thinking and totals are published",
        )
    return report


def cmd_variance(args) -> Report:
    catalog = _load_catalog(args)
    ledger = _load_ledger(args, fixtures.trials_ledger)
    metric = Metric.parse(args.metric)
    models = [args.model] if args.model else ledger.model_ids
    report = Report("variance", _params(args, "metric", "model"), catalog.snapshot_date)
    summary = report.table(
        "per_model",
        [("model_id", TEXT), ("queries", INT), ("mean_cv", RATIO), ("mean_max_min_ratio", RATIO), ("max_max_min_ratio", RATIO)],
    )
    rows = report.table(
        "per_query",
        [("model_id", TEXT), ("query_id", TEXT), ("k", INT), ("mean", MONEY if metric is Metric.COST else RATIO), ("cv", RATIO), ("max_min_ratio", RATIO)],
    )
    cvs = []
    for m in models:
        s = model_variance_summary(ledger, m, metric, catalog)
        summary.add(m, len(s.per_query), s.mean_cv, s.mean_ratio, s.max_ratio)
        for q in s.per_query:
            rows.add(m, q.query_id, q.stats.k, q.stats.mean, q.stats.cv, q.stats.max_min_ratio)
            cvs.append(q.stats.cv)
    report.note("metric", metric.value)
    report.note("mean_cv_all_queries", math.fsum(cvs) / len(cvs), RATIO)
    return report


def cmd_predict(args) -> Report:
    catalog = _load_catalog(args)
    ledger = _load_ledger(args, fixtures.demo_ledger)
    baseline = Baseline.parse(args.baseline)
    embeddings = None
    if baseline is Baseline.EMBEDDING_KNN:
        cache = args.embeddings
        offline = args.offline
        if args.paper_fixture and cache is None:
            cache, offline = fixtures.data_path(fixtures.DEMO_EMBEDDINGS_FILE), True
        provider = EmbeddingProvider(cache, endpoint_url=args.embedding_url, offline=offline)
        texts = [r.query_text for r in ledger if r.trial_index == 0 and r.query_text]
        embeddings = provider.get_many(texts)
    elif args.k is not None or args.weighted:
        raise InputError("--k/--weighted only apply to --baseline knn")
    k = 5 if args.k is None else args.k
    queries = labeled_queries(ledger, catalog, embeddings, require_text=embeddings is not None)
    spec = SplitSpec(test_ratio=args.test_ratio, seed=args.seed)
    reports = evaluate(queries, spec, baseline, k=k, metric=args.distance, weighted=args.weighted)
    params = _params(args, "baseline", "test_ratio", "seed")
    if baseline is Baseline.EMBEDDING_KNN:
        params.update(k=k, distance=args.distance, pooling="distance_weighted" if args.weighted else "unweighted")
    report = Report("predict", params, catalog.snapshot_date)
    t = report.table("mae", [("model_id", TEXT), ("baseline", TEXT), ("test_queries", INT), ("mae", MONEY)])
    per_ds = report.table("mae_per_dataset", [("model_id", TEXT), ("dataset_id", TEXT), ("mae", MONEY)])
    for r in reports:
        t.add(r.model_id, r.baseline.value, len(r.per_query), r.mae)
        for d, v in r.per_dataset_mae.items():
            per_ds.add(r.model_id, d, v)
    report.note("average_mae", math.fsum(r.mae for r in reports) / len(reports), MONEY)
    if args.per_query:
        pq = report.table(
            "per_query",
            [("model_id", TEXT), ("dataset_id", TEXT), ("query_id", TEXT), ("predicted", MONEY), ("actual", MONEY)],
        )
        for r in reports:
            for p in r.per_query:
                pq.add(r.model_id, p.dataset_id, p.query_id, p.predicted, p.actual)
    return report


def cmd_collect(args) -> Report:
    config = CollectorConfig.from_file(args.config)
    if args.max_spend is not None:
        config.max_spend = args.max_spend
    catalog = None
    if args.catalog or args.paper_fixture:
        catalog = _load_catalog(args)
    pricing = catalog[config.model_id] if catalog is not None else None
    queries = read_queries(args.queries)
    sender = canned_sender(args.dry_run) if args.dry_run else None
    # reject re-runs of existing (query, trial) keys before spending anything
    if args.ledger.exists():
        existing = {r.key for r in ingest_records(args.ledger)}
        for q in queries:
            for t in range(args.start_trial, args.start_trial + args.trials):
                key = (config.model_id, q.dataset_id, q.query_id, t)
                if key in existing:
                    raise InputError(f"record {key} already present in {args.ledger}")
    with open(args.ledger, "a", encoding="utf-8") as out:

        def write(record) -> None:
            out.write(dumps_record(record) + "\n")
            out.flush()

        result = collect(
            config,
            queries,
            args.trials,
            sender=sender,
            start_trial=args.start_trial,
            pricing=pricing,
            on_record=write,
            keep_text=args.keep_text,
        )
    params = {
        "config": str(args.config),
        "queries": str(args.queries),
        "ledger": str(args.ledger),
        "trials": args.trials,
        "start_trial": args.start_trial,
        "dry_run": bool(args.dry_run),
    }
    report = Report("collect", params, catalog.snapshot_date if catalog else None)
    report.note("requested", len(queries) * args.trials, INT)
    report.note("records", len(result.records), INT)
    report.note("failures", len(result.failures), INT)
    report.note("missing_thinking_warnings", len(result.warnings), INT)
    if pricing is not None:
        report.note("spent_usd", result.spent, MONEY)
    t = report.table("failures", [("query_id", TEXT), ("dataset_id", TEXT), ("trial_index", INT), ("reason", TEXT)])
    for f in sorted(result.failures, key=lambda f: (f.dataset_id, f.query_id, f.trial_index)):
        t.add(f.query_id, f.dataset_id, f.trial_index, f.reason)
    return report


COMMANDS: dict[str, Callable[[argparse.Namespace], Report]] = {
    "audit": cmd_audit,
    "reversals": cmd_reversals,
    "ablate": cmd_ablate,
    "breakdown": cmd_breakdown,
    "variance": cmd_variance,
    "predict": cmd_predict,
    "collect": cmd_collect,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        report = COMMANDS[args.command](args)
        sys.stdout.write(render(report, args.format, args.decimals))
    except InvariantViolation as exc:
        print(f"costaudit: internal invariant violated: {exc}", file=sys.stderr)
        return 2
    except (InputError, OSError) as exc:
        print(f"costaudit: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
