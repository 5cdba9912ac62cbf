"""Exception hierarchy.

Everything raised on bad input derives from :class:`InputError` so the CLI
can map it to exit code 1. :class:`InvariantViolation` marks a broken
internal guarantee (exit code 2).
"""

from __future__ import annotations


class CostAuditError(Exception):
    """Base class for all package errors."""


class InputError(CostAuditError, ValueError):
    """Invalid or inconsistent user-supplied data."""


class InvariantViolation(CostAuditError, AssertionError):
    """An internal consistency check failed."""


class CatalogError(InputError):
    def __init__(self, message: str, row: int | None = None):
        self.row = row
        super().__init__(f"row {row}: {message}" if row is not None else message)


class UnknownModelError(InputError, KeyError):
    def __init__(self, model_id: str):
        self.model_id = model_id
        super().__init__(f"unknown model_id {model_id!r}")

    def __str__(self) -> str:  # KeyError quotes its argument otherwise
        return self.args[0]


class LedgerError(InputError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class DuplicateKeyError(LedgerError):
    pass


class EmptyCellError(InputError):
    pass


class ModelMismatchError(InputError):
    pass


class StatisticsError(InputError):
    """A statistic is undefined for the given observations."""


class TextUnavailableError(InputError):
    pass


class EmbeddingError(InputError):
    pass


class OfflineMissError(EmbeddingError):
    def __init__(self, content_hash: str):
        self.content_hash = content_hash
        super().__init__(f"offline miss: no cached embedding for {content_hash}")


class DimensionMismatchError(EmbeddingError):
    pass


class CollectError(InputError):
    pass
