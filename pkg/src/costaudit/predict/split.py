"""Seeded train/test split stratified by dataset."""

from __future__ import annotations

import random
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable

from ..errors import InputError
from .types import LabeledQuery


@dataclass(frozen=True)
class SplitSpec:
    test_ratio: float = 0.2
    seed: int = 0
    stratify_key: str = "dataset_id"

    def __post_init__(self) -> None:
        if not 0 < self.test_ratio < 1:
            raise InputError(f"test_ratio must lie in (0, 1), got {self.test_ratio}")


def stratum_test_count(size: int, ratio: float) -> int:
    """round(size * ratio), at least 1 and at most size - 1 for strata of 2 or more."""
    n = round(size * ratio)
    return min(max(n, 1), size - 1)


def stratified_split(
    queries: Iterable[LabeledQuery], spec: SplitSpec
) -> tuple[list[LabeledQuery], list[LabeledQuery]]:
    """Partition queries so each stratum keeps the requested test fraction.

    The unit of assignment is the query, not the row: every model's row for a
    given (dataset, query) lands on the same side. Each stratum is shuffled
    with its own generator seeded from ``(seed, stratum)`` and the first
    ``stratum_test_count`` queries go to test.
    """
    queries = list(queries)
    if not queries:
        raise InputError("cannot split an empty query set")
    strata: dict[str, list[str]] = defaultdict(list)
    for q in queries:
        stratum = str(getattr(q, spec.stratify_key))
        if q.query_id not in strata[stratum]:
            strata[stratum].append(q.query_id)
    test_keys: set[tuple[str, str]] = set()
    for stratum in sorted(strata):
        ids = sorted(strata[stratum])
        if len(ids) < 2:
            raise InputError(f"stratum {stratum!r} has a single query; cannot split")
        rng = random.Random(f"{spec.seed}/{stratum}")
        rng.shuffle(ids)
        for qid in ids[: stratum_test_count(len(ids), spec.test_ratio)]:
            test_keys.add((stratum, qid))
    train, test = [], []
    for q in queries:
        key = (str(getattr(q, spec.stratify_key)), q.query_id)
        (test if key in test_keys else train).append(q)
    return train, test
