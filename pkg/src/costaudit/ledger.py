"""Usage records: one API call's token accounting, plus ingest and aggregation.

Record files are JSON Lines with the fields of :class:`UsageRecord`. A CSV
file with the same header is also accepted.
"""

from __future__ import annotations

import csv
import datetime as dt
import enum
import json
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Iterator, Mapping, Sequence

from .errors import DuplicateKeyError, LedgerError

logger = logging.getLogger(__name__)

FIELDS = (
    "record_id",
    "model_id",
    "dataset_id",
    "query_id",
    "trial_index",
    "prompt_tokens",
    "output_tokens",
    "thinking_tokens",
    "timestamp",
    "query_text",
)
_REQUIRED = ("record_id", "model_id", "dataset_id", "query_id", "prompt_tokens", "output_tokens")
_COUNTS = ("trial_index", "prompt_tokens", "output_tokens", "thinking_tokens")


class TrialFilter(str, enum.Enum):
    ORIGINALS_ONLY = "originals_only"
    ALL_TRIALS = "all_trials"


RecordKey = tuple[str, str, str, int]


@dataclass(frozen=True, slots=True)
class UsageRecord:
    record_id: str
    model_id: str
    dataset_id: str
    query_id: str
    prompt_tokens: int
    output_tokens: int
    thinking_tokens: int = 0
    trial_index: int = 0
    timestamp: dt.datetime | None = None
    query_text: str | None = None
    # synthetic record carrying published per-cell totals rather than one call
    aggregate: bool = False

    def __post_init__(self) -> None:
        for name in _COUNTS:
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int):
                raise LedgerError(f"{name} must be an integer, got {value!r}")
            if value < 0:
                raise LedgerError(f"negative {name}: {value}")
        if self.thinking_tokens > self.output_tokens:
            raise LedgerError(
                f"thinking exceeds output ({self.thinking_tokens} > {self.output_tokens})"
            )

    @property
    def key(self) -> RecordKey:
        return (self.model_id, self.dataset_id, self.query_id, self.trial_index)

    @property
    def generation_tokens(self) -> int:
        """Visible output tokens, i.e. output minus thinking."""
        return self.output_tokens - self.thinking_tokens

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "record_id": self.record_id,
            "model_id": self.model_id,
            "dataset_id": self.dataset_id,
            "query_id": self.query_id,
            "trial_index": self.trial_index,
            "prompt_tokens": self.prompt_tokens,
            "output_tokens": self.output_tokens,
            "thinking_tokens": self.thinking_tokens,
            "timestamp": self.timestamp.isoformat() if self.timestamp else None,
            "query_text": self.query_text,
        }
        if self.aggregate:
            out["aggregate"] = True
        return out


@dataclass(frozen=True)
class AggregateUsage:
    model_id: str
    dataset_id: str
    total_prompt_tokens: int
    total_output_tokens: int
    total_thinking_tokens: int
    query_count: int


@dataclass
class IngestReport:
    """What happened while reading a record file."""

    accepted: int = 0
    missing_thinking: int = 0
    rejected: list[tuple[int, str]] = field(default_factory=list)


class Ledger(Sequence[UsageRecord]):
    """Validated, immutable collection of usage records.

    Records keep their input order. Lookups by ``(model, dataset)`` and
    ``(model, dataset, query)`` are indexed.
    """

    def __init__(self, records: Iterable[UsageRecord], report: IngestReport | None = None):
        self._records: tuple[UsageRecord, ...] = tuple(records)
        self.report = report or IngestReport(accepted=len(self._records))
        seen: dict[RecordKey, str] = {}
        ids: set[str] = set()
        cells: dict[tuple[str, str], list[UsageRecord]] = defaultdict(list)
        queries: dict[tuple[str, str, str], list[UsageRecord]] = defaultdict(list)
        for r in self._records:
            if r.key in seen:
                raise DuplicateKeyError(f"duplicate record key {r.key}")
            if r.record_id in ids:
                raise DuplicateKeyError(f"duplicate record_id {r.record_id!r}")
            seen[r.key] = r.record_id
            ids.add(r.record_id)
            cells[(r.model_id, r.dataset_id)].append(r)
            queries[(r.model_id, r.dataset_id, r.query_id)].append(r)
        self._cells = dict(cells)
        self._queries = dict(queries)

    def __len__(self) -> int:
        return len(self._records)

    def __getitem__(self, i):  # type: ignore[override]
        return self._records[i]

    def __iter__(self) -> Iterator[UsageRecord]:
        return iter(self._records)

    def __repr__(self) -> str:
        return f"Ledger({len(self)} records)"

    @property
    def model_ids(self) -> list[str]:
        return sorted({m for m, _ in self._cells})

    @property
    def dataset_ids(self) -> list[str]:
        return sorted({d for _, d in self._cells})

    def cell(self, model_id: str, dataset_id: str, *, originals_only: bool = True) -> list[UsageRecord]:
        records = self._cells.get((model_id, dataset_id), [])
        if originals_only:
            return [r for r in records if r.trial_index == 0]
        return list(records)

    def trials(self, model_id: str, dataset_id: str, query_id: str) -> list[UsageRecord]:
        return list(self._queries.get((model_id, dataset_id, query_id), []))

    def query_keys(self) -> list[tuple[str, str, str]]:
        return sorted(self._queries)

    def for_model(self, model_id: str) -> list[UsageRecord]:
        return [r for r in self._records if r.model_id == model_id]

    def check_priced(self, catalog) -> None:
        """Raise :class:`UnknownModelError` for any model missing from ``catalog``."""
        for model_id in self.model_ids:
            catalog[model_id]


def _as_count(raw: Any, name: str) -> int:
    if isinstance(raw, bool):
        raise LedgerError(f"{name} must be an integer, got {raw!r}")
    if isinstance(raw, int):
        return raw
    if isinstance(raw, float):
        if raw.is_integer():
            return int(raw)
        raise LedgerError(f"fractional {name}: {raw!r}")
    if isinstance(raw, str):
        text = raw.strip()
        try:
            return int(text)
        except ValueError:
            pass
        try:
            value = float(text)
        except ValueError:
            raise LedgerError(f"{name} is not a number: {raw!r}") from None
        if value.is_integer():
            return int(value)
        raise LedgerError(f"fractional {name}: {raw!r}")
    raise LedgerError(f"{name} must be an integer, got {raw!r}")


def record_from_mapping(raw: Mapping[str, Any]) -> tuple[UsageRecord, bool]:
    """Build a record from a parsed row. Returns ``(record, thinking_was_missing)``."""
    missing = [k for k in _REQUIRED if raw.get(k) in (None, "")]
    if missing:
        raise LedgerError(f"missing field(s): {', '.join(missing)}")
    thinking_raw = raw.get("thinking_tokens")
    thinking_missing = thinking_raw in (None, "")
    ts_raw = raw.get("timestamp")
    timestamp = None
    if ts_raw not in (None, ""):
        try:
            timestamp = dt.datetime.fromisoformat(str(ts_raw).replace("Z", "+00:00"))
        except ValueError:
            raise LedgerError(f"invalid timestamp {ts_raw!r}") from None
    text = raw.get("query_text")
    aggregate = raw.get("aggregate", False)
    if isinstance(aggregate, str):
        aggregate = aggregate.strip().lower() in ("1", "true", "yes")
    record = UsageRecord(
        record_id=str(raw["record_id"]),
        model_id=str(raw["model_id"]),
        dataset_id=str(raw["dataset_id"]),
        query_id=str(raw["query_id"]),
        trial_index=_as_count(raw.get("trial_index") or 0, "trial_index"),
        prompt_tokens=_as_count(raw["prompt_tokens"], "prompt_tokens"),
        output_tokens=_as_count(raw["output_tokens"], "output_tokens"),
        thinking_tokens=0 if thinking_missing else _as_count(thinking_raw, "thinking_tokens"),
        timestamp=timestamp,
        query_text=None if text in (None, "") else str(text),
        aggregate=bool(aggregate),
    )
    return record, thinking_missing


def _iter_rows(path: Path) -> Iterator[tuple[int, Mapping[str, Any] | Exception]]:
    if path.suffix.lower() == ".csv":
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            for row in reader:
                yield reader.line_num, row
        return
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                yield lineno, LedgerError(f"unparseable line: {exc.msg}")
                continue
            if not isinstance(obj, dict):
                yield lineno, LedgerError("unparseable line: expected a JSON object")
                continue
            yield lineno, obj


def ingest_records(path: str | Path, *, strict: bool = True) -> Ledger:
    """Read and validate a record file.

    In strict mode the first invalid line aborts the whole ingest. In lenient
    mode invalid lines (including duplicates) are skipped and listed in
    ``ledger.report.rejected``.
    """
    path = Path(path)
    if not path.is_file():
        raise LedgerError(f"record file not found: {path}")
    report = IngestReport()
    records: list[UsageRecord] = []
    keys: set[RecordKey] = set()
    ids: set[str] = set()
    for lineno, row in _iter_rows(path):
        try:
            if isinstance(row, Exception):
                raise row
            record, thinking_missing = record_from_mapping(row)
            if record.key in keys:
                raise DuplicateKeyError(f"duplicate record key {record.key}")
            if record.record_id in ids:
                raise DuplicateKeyError(f"duplicate record_id {record.record_id!r}")
        except LedgerError as exc:
            if strict:
                raise type(exc)(str(exc), lineno) from None
            report.rejected.append((lineno, str(exc)))
            continue
        keys.add(record.key)
        ids.add(record.record_id)
        report.missing_thinking += thinking_missing
        records.append(record)
    report.accepted = len(records)
    if report.missing_thinking:
        logger.warning(
            "%s: %d record(s) without thinking_tokens, treated as 0", path, report.missing_thinking
        )
    if report.rejected:
        logger.warning("%s: skipped %d invalid line(s)", path, len(report.rejected))
    return Ledger(records, report)


def dumps_record(record: UsageRecord) -> str:
    return json.dumps(record.to_dict(), ensure_ascii=False)


def write_records(records: Iterable[UsageRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(dumps_record(r) + "\n")


def append_records(records: Iterable[UsageRecord], path: str | Path) -> int:
    """Append to a record file, refusing any key already present there."""
    path = Path(path)
    existing: set[RecordKey] = set()
    existing_ids: set[str] = set()
    if path.exists():
        for r in ingest_records(path):
            existing.add(r.key)
            existing_ids.add(r.record_id)
    records = list(records)
    for r in records:
        if r.key in existing or r.record_id in existing_ids:
            raise DuplicateKeyError(f"record {r.key} already present in {path}")
        existing.add(r.key)
        existing_ids.add(r.record_id)
    with open(path, "a", encoding="utf-8") as fh:
        for r in records:
            fh.write(dumps_record(r) + "\n")
    return len(records)


def aggregate_usage(
    ledger: Iterable[UsageRecord], trial_filter: TrialFilter | str = TrialFilter.ORIGINALS_ONLY
) -> list[AggregateUsage]:
    """Token totals per (model, dataset), sorted by key."""
    trial_filter = TrialFilter(trial_filter)
    sums: dict[tuple[str, str], list[int]] = {}
    for r in ledger:
        if trial_filter is TrialFilter.ORIGINALS_ONLY and r.trial_index != 0:
            continue
        acc = sums.setdefault((r.model_id, r.dataset_id), [0, 0, 0, 0])
        acc[0] += r.prompt_tokens
        acc[1] += r.output_tokens
        acc[2] += r.thinking_tokens
        acc[3] += 1
    return [AggregateUsage(m, d, *sums[(m, d)]) for m, d in sorted(sums)]
