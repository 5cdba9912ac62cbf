from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from ..catalog import PricingCatalog
from ..cost import query_cost
from ..errors import InputError, TextUnavailableError
from ..ledger import Ledger


class Baseline(str, enum.Enum):
    MEAN = "mean"
    PROMPT_LENGTH_LR = "prompt_length_lr"
    EMBEDDING_KNN = "embedding_knn"

    @classmethod
    def parse(cls, value: str | Baseline) -> Baseline:
        aliases = {"lr": cls.PROMPT_LENGTH_LR, "knn": cls.EMBEDDING_KNN}
        if value in aliases:
            return aliases[value]
        return cls(value)


@dataclass(frozen=True)
class LabeledQuery:
    query_id: str
    dataset_id: str
    model_id: str
    prompt_tokens: int
    actual_cost: float
    embedding: tuple[float, ...] | None = None
    query_text: str | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if self.actual_cost < 0:
            raise InputError(f"negative cost for query {self.query_id!r}")


def labeled_queries(
    ledger: Ledger,
    catalog: PricingCatalog,
    embeddings: Mapping[str, Sequence[float]] | None = None,
    *,
    require_text: bool = False,
) -> list[LabeledQuery]:
    """One labeled row per original-trial record.

    ``embeddings`` maps query text to a vector. When ``require_text`` is set
    a record without ``query_text`` raises :class:`TextUnavailableError`.
    """
    out = []
    for r in ledger:
        if r.trial_index != 0:
            continue
        if require_text and not r.query_text:
            raise TextUnavailableError(
                f"text unavailable for query {r.query_id!r} ({r.model_id}, {r.dataset_id})"
            )
        vec = None
        if embeddings is not None and r.query_text:
            vec = tuple(float(x) for x in embeddings[r.query_text])
        out.append(
            LabeledQuery(
                query_id=r.query_id,
                dataset_id=r.dataset_id,
                model_id=r.model_id,
                prompt_tokens=r.prompt_tokens,
                actual_cost=query_cost(catalog[r.model_id], r),
                embedding=vec,
                query_text=r.query_text,
            )
        )
    return out
