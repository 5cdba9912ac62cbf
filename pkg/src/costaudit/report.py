"""Report envelope and the three output formats (json, table, csv).

Payload values stay at full precision until rendering. Money columns print
with 4 decimals in machine formats and 2 in the human table.
"""

from __future__ import annotations

import csv
import datetime as dt
import io
import json
import os
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Any, Sequence

from . import __version__

FORMATS = ("json", "table", "csv")

TEXT, INT, MONEY, RATIO = "text", "int", "money", "ratio"

_DIGITS = {
    "machine": {MONEY: 4, RATIO: 6},
    "human": {MONEY: 2, RATIO: 3},
}


@dataclass
class Table:
    name: str
    columns: list[tuple[str, str]]
    rows: list[list[Any]] = field(default_factory=list)

    def add(self, *values: Any) -> None:
        if len(values) != len(self.columns):
            raise ValueError(f"{self.name}: expected {len(self.columns)} values, got {len(values)}")
        self.rows.append(list(values))


@dataclass
class Report:
    command: str
    parameters: dict[str, Any]
    catalog_snapshot_date: dt.date | None
    summary: list[tuple[str, Any, str]] = field(default_factory=list)
    tables: list[Table] = field(default_factory=list)

    def note(self, key: str, value: Any, kind: str = TEXT) -> None:
        self.summary.append((key, value, kind))

    def table(self, name: str, columns: Sequence[tuple[str, str]]) -> Table:
        t = Table(name, list(columns))
        self.tables.append(t)
        return t


def generated_at() -> str:
    """UTC timestamp; honours SOURCE_DATE_EPOCH so reruns can be byte-identical."""
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch:
        when = dt.datetime.fromtimestamp(int(epoch), dt.timezone.utc)
    else:
        when = dt.datetime.now(dt.timezone.utc).replace(microsecond=0)
    return when.isoformat().replace("+00:00", "Z")


def _fmt(value: Any, kind: str, style: str, decimals: int | None = None) -> Any:
    if value is None or isinstance(value, bool):
        return value
    if isinstance(value, Decimal):
        value = float(value)
    if kind in (MONEY, RATIO) and isinstance(value, (int, float)):
        digits = decimals if (decimals is not None and kind == MONEY) else _DIGITS[style][kind]
        return round(float(value), digits)
    if kind == INT:
        return int(value)
    return value


def to_document(report: Report, decimals: int | None = None) -> dict[str, Any]:
    payload: dict[str, Any] = {
        "summary": {k: _fmt(v, kind, "machine", decimals) for k, v, kind in report.summary},
        "tables": {
            t.name: {
                "columns": [c for c, _ in t.columns],
                "rows": [
                    [_fmt(v, kind, "machine", decimals) for v, (_, kind) in zip(row, t.columns)]
                    for row in t.rows
                ],
            }
            for t in report.tables
        },
    }
    return {
        "tool_version": __version__,
        "catalog_snapshot_date": (
            report.catalog_snapshot_date.isoformat() if report.catalog_snapshot_date else None
        ),
        "command": report.command,
        "parameters": report.parameters,
        "payload": payload,
        "generated_at": generated_at(),
    }


def dumps_json(document: dict[str, Any]) -> str:
    return json.dumps(document, indent=2, ensure_ascii=False) + "\n"


def _cell_text(value: Any, kind: str, style: str, decimals: int | None) -> str:
    v = _fmt(value, kind, style, decimals)
    if v is None:
        return ""
    if isinstance(v, float):
        digits = decimals if (decimals is not None and kind == MONEY) else _DIGITS[style].get(kind, 6)
        return f"{v:.{digits}f}"
    return str(v)


def render_table(report: Report, decimals: int | None = None) -> str:
    out = io.StringIO()
    snap = report.catalog_snapshot_date.isoformat() if report.catalog_snapshot_date else "n/a"
    out.write(f"{report.command}  (pricing snapshot {snap})\n")
    if report.summary:
        width = max(len(k) for k, _, _ in report.summary)
        for k, v, kind in report.summary:
            out.write(f"  {k.ljust(width)}  {_cell_text(v, kind, 'human', None)}\n")
    for t in report.tables:
        cells = [[_cell_text(v, kind, "human", None) for v, (_, kind) in zip(row, t.columns)] for row in t.rows]
        widths = [
            max([len(c)] + [len(r[i]) for r in cells]) for i, (c, _) in enumerate(t.columns)
        ]
        numeric = [kind != TEXT for _, kind in t.columns]
        out.write(f"\n[{t.name}]\n")

        def line(values: Sequence[str]) -> str:
            parts = [
                v.rjust(w) if num else v.ljust(w) for v, w, num in zip(values, widths, numeric)
            ]
            return "  ".join(parts).rstrip() + "\n"

        out.write(line([c for c, _ in t.columns]))
        out.write(line(["-" * w for w in widths]))
        for r in cells:
            out.write(line(r))
    return out.getvalue()


def render_csv(report: Report, decimals: int | None = None) -> str:
    """One CSV block per table, each preceded by a ``# name`` line."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    snap = report.catalog_snapshot_date.isoformat() if report.catalog_snapshot_date else ""
    out.write(f"# command={report.command} catalog_snapshot_date={snap}\n")
    if report.summary:
        out.write("# summary\n")
        writer.writerow(["key", "value"])
        for k, v, kind in report.summary:
            writer.writerow([k, _cell_text(v, kind, "machine", decimals)])
    for t in report.tables:
        out.write(f"# {t.name}\n")
        writer.writerow([c for c, _ in t.columns])
        for row in t.rows:
            writer.writerow(
                [_cell_text(v, kind, "machine", decimals) for v, (_, kind) in zip(row, t.columns)]
            )
    return out.getvalue()


def render(report: Report, fmt: str = "json", decimals: int | None = None) -> str:
    if fmt == "json":
        return dumps_json(to_document(report, decimals))
    if fmt == "table":
        return render_table(report, decimals)
    if fmt == "csv":
        return render_csv(report, decimals)
    raise ValueError(f"unknown format {fmt!r}")
