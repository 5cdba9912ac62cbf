import datetime as dt
from decimal import Decimal

import pytest

from costaudit import fixtures
from costaudit.catalog import ModelPricing, PricingCatalog
from costaudit.ledger import UsageRecord

SNAP = dt.date(2026, 2, 28)


def pricing(model_id="m", p_in="1.00", p_out="2.00", provider="p"):
    return ModelPricing(model_id, provider, Decimal(p_in), Decimal(p_out), SNAP)


def record(model_id="m", dataset_id="d", query_id="q", prompt=100, output=50, thinking=30, trial=0, **kw):
    return UsageRecord(
        record_id=kw.pop("record_id", f"{model_id}:{dataset_id}:{query_id}:{trial}"),
        model_id=model_id,
        dataset_id=dataset_id,
        query_id=query_id,
        prompt_tokens=prompt,
        output_tokens=output,
        thinking_tokens=thinking,
        trial_index=trial,
        **kw,
    )


def catalog_of(prices):
    """Catalog from ``{model_id: (input, output)}``."""
    return PricingCatalog.from_entries(pricing(m, str(a), str(b)) for m, (a, b) in prices.items())


@pytest.fixture(scope="session")
def reference_catalog():
    return fixtures.reference_catalog()


@pytest.fixture(scope="session")
def reference_ledger():
    return fixtures.reference_ledger()


@pytest.fixture(scope="session")
def cost_table():
    return fixtures.cost_table()


@pytest.fixture(scope="session")
def thinking_table():
    return fixtures.thinking_table()
