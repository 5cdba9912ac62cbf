"""Dated pricing catalogs.

A catalog maps model identifiers to per-million-token input and output
prices. Prices are kept as :class:`~decimal.Decimal` so catalog values such
as ``1.75`` stay exact; cost arithmetic downstream converts to float.

Two on-disk formats are accepted:

* CSV with a header row containing ``model_id, provider,
  input_price_per_mtok, output_price_per_mtok, snapshot_date``.
* JSON, either a list of row objects or ``{"snapshot_date": ..., "models": [...]}``
  where rows may omit ``snapshot_date`` and inherit the catalog date.
"""

from __future__ import annotations

import csv
import datetime as dt
import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from pathlib import Path
from typing import Iterable, Iterator, Mapping

from .errors import CatalogError, UnknownModelError

logger = logging.getLogger(__name__)

MTOK = 1_000_000

COLUMNS = (
    "model_id",
    "provider",
    "input_price_per_mtok",
    "output_price_per_mtok",
    "snapshot_date",
)


@dataclass(frozen=True, slots=True)
class ModelPricing:
    """Unit prices for one model, in USD per million tokens."""

    model_id: str
    provider: str
    input_price_per_mtok: Decimal
    output_price_per_mtok: Decimal
    snapshot_date: dt.date

    def __post_init__(self) -> None:
        for name in ("input_price_per_mtok", "output_price_per_mtok"):
            value = getattr(self, name)
            if not isinstance(value, Decimal):
                value = Decimal(str(value))
                object.__setattr__(self, name, value)
            if not value.is_finite() or value < 0:
                raise CatalogError(f"{name} must be a non-negative number, got {value}")

    @property
    def listed_price(self) -> Decimal:
        return self.input_price_per_mtok + self.output_price_per_mtok

    @property
    def input_price_per_token(self) -> float:
        return float(self.input_price_per_mtok) / MTOK

    @property
    def output_price_per_token(self) -> float:
        return float(self.output_price_per_mtok) / MTOK

    def scaled(self, factor: Decimal | int | str) -> ModelPricing:
        """Copy with both unit prices multiplied by ``factor``."""
        f = Decimal(str(factor))
        return ModelPricing(
            self.model_id,
            self.provider,
            self.input_price_per_mtok * f,
            self.output_price_per_mtok * f,
            self.snapshot_date,
        )


@dataclass(frozen=True)
class PricingCatalog:
    entries: tuple[ModelPricing, ...]
    snapshot_date: dt.date
    _by_id: Mapping[str, ModelPricing] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        by_id: dict[str, ModelPricing] = {}
        for entry in self.entries:
            if entry.model_id in by_id:
                raise CatalogError(f"duplicate model_id {entry.model_id!r}")
            by_id[entry.model_id] = entry
        object.__setattr__(self, "_by_id", by_id)

    @classmethod
    def from_entries(
        cls, entries: Iterable[ModelPricing], snapshot_date: dt.date | None = None
    ) -> PricingCatalog:
        entries = tuple(entries)
        if not entries:
            raise CatalogError("empty catalog")
        if snapshot_date is None:
            snapshot_date = _dominant_date(e.snapshot_date for e in entries)
        return cls(entries, snapshot_date)

    def __getitem__(self, model_id: str) -> ModelPricing:
        try:
            return self._by_id[model_id]
        except KeyError:
            raise UnknownModelError(model_id) from None

    def __contains__(self, model_id: object) -> bool:
        return model_id in self._by_id

    def __iter__(self) -> Iterator[ModelPricing]:
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def model_ids(self) -> list[str]:
        return [e.model_id for e in self.entries]

    def listed_prices(self) -> dict[str, Decimal]:
        return {e.model_id: e.listed_price for e in self.entries}


def listed_price(catalog: PricingCatalog, model_id: str) -> Decimal:
    """Input price plus output price per million tokens, the figure users compare."""
    return catalog[model_id].listed_price


def _dominant_date(dates: Iterable[dt.date]) -> dt.date:
    counts = Counter(dates)
    # most frequent date; ties resolved toward the latest snapshot
    return max(counts, key=lambda d: (counts[d], d))


def _parse_date(raw: object, row: int) -> dt.date:
    if isinstance(raw, dt.date):
        return raw
    try:
        return dt.date.fromisoformat(str(raw).strip())
    except ValueError:
        raise CatalogError(f"invalid snapshot_date {raw!r}", row) from None


def _parse_price(raw: object, name: str, row: int) -> Decimal:
    try:
        value = Decimal(str(raw).strip())
    except InvalidOperation:
        raise CatalogError(f"{name} is not a number: {raw!r}", row) from None
    if not value.is_finite():
        raise CatalogError(f"{name} is not finite: {raw!r}", row)
    if value < 0:
        raise CatalogError(f"negative price in {name}: {value}", row)
    return value


def _row_to_pricing(
    raw: Mapping[str, object], row: int, default_date: dt.date | None
) -> ModelPricing:
    missing = [c for c in COLUMNS if c not in raw or raw[c] in (None, "")]
    if default_date is not None and "snapshot_date" in missing:
        missing.remove("snapshot_date")
    if missing:
        raise CatalogError(f"malformed row, missing {', '.join(missing)}", row)
    model_id = str(raw["model_id"]).strip()
    if not model_id:
        raise CatalogError("malformed row, empty model_id", row)
    date_raw = raw.get("snapshot_date")
    return ModelPricing(
        model_id=model_id,
        provider=str(raw["provider"]).strip(),
        input_price_per_mtok=_parse_price(raw["input_price_per_mtok"], "input_price_per_mtok", row),
        output_price_per_mtok=_parse_price(
            raw["output_price_per_mtok"], "output_price_per_mtok", row
        ),
        snapshot_date=_parse_date(date_raw, row) if date_raw not in (None, "") else default_date,
    )


def parse_rows(
    rows: Iterable[Mapping[str, object]],
    *,
    default_date: dt.date | None = None,
    first_row: int = 1,
) -> PricingCatalog:
    entries: list[ModelPricing] = []
    seen: dict[str, int] = {}
    warned: set[str] = set()
    for i, raw in enumerate(rows, start=first_row):
        extra = set(raw) - set(COLUMNS) - warned
        if extra:
            logger.warning("ignoring unknown catalog columns: %s", ", ".join(sorted(extra)))
            warned |= extra
        entry = _row_to_pricing(raw, i, default_date)
        if entry.model_id in seen:
            raise CatalogError(
                f"duplicate model_id {entry.model_id!r} (first seen at row {seen[entry.model_id]})", i
            )
        seen[entry.model_id] = i
        entries.append(entry)
    if not entries:
        raise CatalogError("empty catalog")
    return PricingCatalog.from_entries(entries, default_date)


def load_catalog(path: str | Path) -> PricingCatalog:
    """Load and validate a catalog file (``.csv`` or ``.json``).

    Row numbers in error messages count data rows from 1, not file lines.
    """
    path = Path(path)
    if not path.is_file():
        raise CatalogError(f"catalog file not found: {path}")
    text = path.read_text(encoding="utf-8")
    if not text.strip():
        raise CatalogError("empty catalog")
    if path.suffix.lower() == ".json":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise CatalogError(f"invalid JSON: {exc}") from None
        if isinstance(doc, dict):
            date = doc.get("snapshot_date")
            default = _parse_date(date, 0) if date else None
            return parse_rows(doc.get("models", []), default_date=default)
        if not isinstance(doc, list) or not all(isinstance(r, dict) for r in doc):
            raise CatalogError("JSON catalog must be a list of rows or an object with 'models'")
        return parse_rows(doc)
    reader = csv.DictReader(text.splitlines())
    if reader.fieldnames is None:
        raise CatalogError("empty catalog")
    rows = []
    for i, raw in enumerate(reader, start=1):
        if None in raw:
            raise CatalogError("malformed row, too many fields", i)
        rows.append({k.strip(): v for k, v in raw.items()})
    return parse_rows(rows)


def write_catalog_csv(catalog: PricingCatalog, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(COLUMNS)
        for e in catalog:
            writer.writerow(
                [
                    e.model_id,
                    e.provider,
                    str(e.input_price_per_mtok),
                    str(e.output_price_per_mtok),
                    e.snapshot_date.isoformat(),
                ]
            )
