"""Usage collection from OpenAI-compatible chat-completion endpoints.

Each (query, trial) becomes one request; the response's usage counters are
mapped onto a :class:`~costaudit.ledger.UsageRecord` through a configurable
field map, because providers report thinking tokens under different keys.
Failed calls end up in the failure list, never as partial records.
"""

from __future__ import annotations

import datetime as dt
import json
import logging
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

import httpx

from .catalog import ModelPricing
from .cost import query_cost
from .errors import CollectError
from .ledger import UsageRecord

logger = logging.getLogger(__name__)

# Where each provider family reports usage in its OpenAI-compatible response.
# ``output_includes_thinking`` is False when the completion count excludes
# thinking, in which case output = completion + thinking.
PROVIDER_FIELD_MAPS: dict[str, dict[str, Any]] = {
    "openai": {
        "prompt_tokens": "usage.prompt_tokens",
        "output_tokens": "usage.completion_tokens",
        "thinking_tokens": "usage.completion_tokens_details.reasoning_tokens",
        "output_includes_thinking": True,
    },
    "google": {
        "prompt_tokens": "usage.prompt_tokens",
        "output_tokens": "usage.completion_tokens",
        "thinking_tokens": "usage.completion_tokens_details.reasoning_tokens",
        "output_includes_thinking": True,
    },
    "anthropic": {
        "prompt_tokens": "usage.prompt_tokens",
        "output_tokens": "usage.completion_tokens",
        "thinking_tokens": None,
        "output_includes_thinking": True,
    },
    "moonshot": {
        "prompt_tokens": "usage.prompt_tokens",
        "output_tokens": "usage.completion_tokens",
        "thinking_tokens": "usage.completion_tokens_details.reasoning_tokens",
        "output_includes_thinking": True,
    },
    "minimax": {
        "prompt_tokens": "usage.prompt_tokens",
        "output_tokens": "usage.completion_tokens",
        "thinking_tokens": "usage.completion_tokens_details.reasoning_tokens",
        "output_includes_thinking": True,
    },
}

# Generation settings used for the bundled reference measurements.
REFERENCE_GENERATION_PARAMS: dict[str, dict[str, Any]] = {
    "GPT-5.2": {"temperature": 0.2, "top_p": 1.0, "reasoning_effort": "high"},
    "GPT-5 Mini": {"temperature": 0.2, "top_p": 1.0, "reasoning_effort": "medium"},
    "Gemini 3.1 Pro": {"temperature": 0.2, "top_p": 1.0},
    "Gemini 3 Flash": {"temperature": 0.2, "top_p": 1.0},
    "Claude Opus 4.6": {"temperature": 0.2, "top_p": 1.0, "thinking": {"type": "enabled"}},
    "Claude Haiku 4.5": {"temperature": 0.2, "top_p": 1.0},
    "Kimi K2.5": {"temperature": 1.0, "top_p": 0.95},
    "MiniMax-M2.5": {"temperature": 0.2, "top_p": 1.0},
}


@dataclass
class CollectorConfig:
    endpoint_url: str
    model_id: str
    credential_source: str = "OPENAI_API_KEY"
    api_model: str | None = None
    usage_field_map: Mapping[str, Any] = field(
        default_factory=lambda: dict(PROVIDER_FIELD_MAPS["openai"])
    )
    generation_params: Mapping[str, Any] = field(default_factory=dict)
    max_in_flight: int = 4
    max_attempts: int = 3
    backoff_base: float = 1.0
    timeout: float = 60.0
    max_spend: float | None = None

    def __post_init__(self) -> None:
        if self.max_in_flight < 1:
            raise CollectError("max_in_flight must be at least 1")
        if self.max_attempts < 1:
            raise CollectError("max_attempts must be at least 1")
        for required in ("prompt_tokens", "output_tokens"):
            if not self.usage_field_map.get(required):
                raise CollectError(f"usage_field_map must map {required}")

    @classmethod
    def from_mapping(cls, raw: Mapping[str, Any]) -> CollectorConfig:
        raw = dict(raw)
        fmap = raw.pop("usage_field_map", None)
        provider = raw.pop("provider", None)
        if fmap is None:
            fmap = PROVIDER_FIELD_MAPS.get(provider or "openai")
            if fmap is None:
                raise CollectError(f"no default field map for provider {provider!r}")
        if "retry_policy" in raw:
            policy = raw.pop("retry_policy")
            raw.setdefault("max_attempts", policy.get("max_attempts", 3))
            raw.setdefault("backoff_base", policy.get("backoff_base", 1.0))
        known = set(cls.__dataclass_fields__)
        unknown = set(raw) - known
        if unknown:
            raise CollectError(f"unknown collector config keys: {', '.join(sorted(unknown))}")
        return cls(usage_field_map=dict(fmap), **raw)

    @classmethod
    def from_file(cls, path: str | Path) -> CollectorConfig:
        try:
            return cls.from_mapping(json.loads(Path(path).read_text(encoding="utf-8")))
        except (OSError, json.JSONDecodeError) as exc:
            raise CollectError(f"cannot read collector config {path}: {exc}") from None


@dataclass(frozen=True)
class QueryItem:
    query_id: str
    dataset_id: str
    text: str


@dataclass(frozen=True)
class Failure:
    query_id: str
    dataset_id: str
    trial_index: int
    reason: str


@dataclass
class CollectResult:
    records: list[UsageRecord] = field(default_factory=list)
    failures: list[Failure] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    spent: float = 0.0


class _Fatal(Exception):
    """Non-retryable request failure."""


class _AuthFailure(_Fatal):
    """Credentials rejected; no further calls are issued."""


def lookup_path(body: Any, path: str) -> Any:
    """Follow a dotted path through nested dicts (and list indices)."""
    node = body
    for part in path.split("."):
        if isinstance(node, list) and part.isdigit():
            idx = int(part)
            if idx >= len(node):
                raise KeyError(path)
            node = node[idx]
        elif isinstance(node, dict) and part in node:
            node = node[part]
        else:
            raise KeyError(path)
    return node


def extract_usage(body: Any, field_map: Mapping[str, Any]) -> tuple[int, int, int, bool]:
    """Return ``(prompt, output, thinking, thinking_missing)`` from a response body."""

    def count(name: str) -> int:
        path = field_map[name]
        try:
            value = lookup_path(body, path)
        except KeyError:
            raise CollectError(f"malformed usage payload: missing {path}") from None
        if isinstance(value, bool) or not isinstance(value, int) or value < 0:
            raise CollectError(f"malformed usage payload: {path} = {value!r}")
        return value

    prompt = count("prompt_tokens")
    output = count("output_tokens")
    thinking, missing = 0, True
    if field_map.get("thinking_tokens"):
        try:
            thinking = count("thinking_tokens")
            missing = False
        except CollectError:
            thinking, missing = 0, True
    if not field_map.get("output_includes_thinking", True):
        output += thinking
    if thinking > output:
        raise CollectError(f"malformed usage payload: thinking {thinking} exceeds output {output}")
    return prompt, output, thinking, missing


Sender = Callable[[dict, QueryItem, int], dict]


def http_sender(config: CollectorConfig, transport: httpx.BaseTransport | None = None) -> Sender:
    key = os.environ.get(config.credential_source)
    headers = {"Authorization": f"Bearer {key}"} if key else {}
    client = httpx.Client(timeout=config.timeout, headers=headers, transport=transport)

    def send(payload: dict, item: QueryItem, trial: int) -> dict:
        resp = client.post(config.endpoint_url, json=payload)
        if resp.status_code in (401, 403):
            raise _AuthFailure(f"authentication failure (HTTP {resp.status_code})")
        if resp.status_code == 429 or resp.status_code >= 500:
            raise httpx.HTTPStatusError(
                f"HTTP {resp.status_code}", request=resp.request, response=resp
            )
        if resp.status_code >= 400:
            raise _Fatal(f"request rejected (HTTP {resp.status_code})")
        try:
            return resp.json()
        except json.JSONDecodeError:
            raise _Fatal("response is not JSON") from None

    send.close = client.close  # type: ignore[attr-defined]
    return send


def canned_sender(directory: str | Path) -> Sender:
    """Dry-run sender reading ``<query_id>.<trial>.json``, ``<query_id>.json`` or ``default.json``."""
    directory = Path(directory)

    def send(payload: dict, item: QueryItem, trial: int) -> dict:
        for name in (f"{item.query_id}.{trial}.json", f"{item.query_id}.json", "default.json"):
            path = directory / name
            if path.is_file():
                return json.loads(path.read_text(encoding="utf-8"))
        raise _Fatal(f"no canned response for {item.query_id!r} trial {trial}")

    return send


def build_payload(config: CollectorConfig, item: QueryItem) -> dict:
    payload = dict(config.generation_params)
    payload["model"] = config.api_model or config.model_id
    payload["messages"] = [{"role": "user", "content": item.text}]
    return payload


def collect(
    config: CollectorConfig,
    queries: Sequence[QueryItem],
    trials: int = 1,
    *,
    sender: Sender | None = None,
    transport: httpx.BaseTransport | None = None,
    start_trial: int = 0,
    pricing: ModelPricing | None = None,
    on_record: Callable[[UsageRecord], None] | None = None,
    keep_text: bool = False,
    sleep: Callable[[float], None] = time.sleep,
) -> CollectResult:
    """Run ``trials`` calls per query and return records plus failures.

    ``on_record`` is invoked from the calling thread only, in completion
    order, so it can append to a ledger file without extra locking.
    """
    if trials < 1:
        raise CollectError("trials must be at least 1")
    if config.max_spend is not None and pricing is None:
        raise CollectError("max_spend needs pricing to track spend")
    own_sender = sender is None
    send = sender or http_sender(config, transport)
    result = CollectResult()
    spend_lock = threading.Lock()
    abort: list[str] = []

    def one(item: QueryItem, trial: int) -> UsageRecord:
        if abort:
            raise _Fatal(f"skipped after {abort[0]}")
        if config.max_spend is not None:
            with spend_lock:
                if result.spent >= config.max_spend:
                    raise _Fatal(f"max spend ${config.max_spend} reached")
        payload = build_payload(config, item)
        last: Exception | None = None
        for attempt in range(config.max_attempts):
            if attempt:
                sleep(config.backoff_base * 2 ** (attempt - 1))
            try:
                body = send(payload, item, trial)
                break
            except _AuthFailure as exc:
                abort.append(str(exc))
                raise
            except _Fatal:
                raise
            except (httpx.TransportError, httpx.HTTPStatusError) as exc:
                last = exc
        else:
            raise _Fatal(f"retry exhaustion after {config.max_attempts} attempts: {last}")
        prompt, output, thinking, missing = extract_usage(body, config.usage_field_map)
        if missing:
            msg = f"{item.query_id} trial {trial}: no thinking count in response, recorded as 0"
            logger.warning(msg)
            result.warnings.append(msg)
        record = UsageRecord(
            record_id=f"{config.model_id}:{item.dataset_id}:{item.query_id}:{trial}",
            model_id=config.model_id,
            dataset_id=item.dataset_id,
            query_id=item.query_id,
            trial_index=trial,
            prompt_tokens=prompt,
            output_tokens=output,
            thinking_tokens=thinking,
            timestamp=dt.datetime.now(dt.timezone.utc),
            query_text=item.text if keep_text else None,
        )
        if pricing is not None:
            with spend_lock:
                result.spent += query_cost(pricing, record)
        return record

    jobs = [(item, t) for item in queries for t in range(start_trial, start_trial + trials)]
    try:
        with ThreadPoolExecutor(max_workers=config.max_in_flight) as pool:
            futures = {pool.submit(one, item, t): (item, t) for item, t in jobs}
            for fut in as_completed(futures):
                item, t = futures[fut]
                try:
                    record = fut.result()
                except (_Fatal, CollectError) as exc:
                    result.failures.append(Failure(item.query_id, item.dataset_id, t, str(exc)))
                    continue
                result.records.append(record)
                if on_record is not None:
                    on_record(record)
    finally:
        if own_sender:
            send.close()  # type: ignore[attr-defined]
    return result


def read_queries(path: str | Path) -> list[QueryItem]:
    """Queries file: JSON Lines with ``query_id``, ``dataset_id`` and ``text``."""
    items = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                items.append(QueryItem(str(obj["query_id"]), str(obj["dataset_id"]), str(obj["text"])))
            except (json.JSONDecodeError, KeyError, TypeError):
                raise CollectError(f"{path}:{lineno}: expected query_id, dataset_id and text") from None
    return items
