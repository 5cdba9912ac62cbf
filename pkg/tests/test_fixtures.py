from decimal import Decimal

import pytest

from costaudit import fixtures
from costaudit.cost import query_cost


@pytest.mark.parametrize(
    "name",
    [
        fixtures.AGGREGATE_LEDGER_FILE,
        fixtures.TRIALS_FILE,
        fixtures.DEMO_LEDGER_FILE,
        fixtures.DEMO_EMBEDDINGS_FILE,
    ],
)
def test_bundled_files_match_generator(tmp_path, name):
    fixtures.regenerate(tmp_path)
    assert (tmp_path / name).read_bytes() == fixtures.data_path(name).read_bytes()


def test_cells_reproduce_both_tables(reference_catalog, reference_ledger, cost_table, thinking_table):
    assert len(reference_ledger) == 72
    for r in reference_ledger:
        assert r.aggregate and r.query_id == "__total__"
        assert Decimal(r.thinking_tokens) / 1000 == thinking_table[r.model_id][r.dataset_id]
        usd = Decimal(str(round(query_cost(reference_catalog[r.model_id], r), 2)))
        assert usd == cost_table[r.model_id][r.dataset_id]


def test_cell_tokens_rejects_impossible_cell():
    with pytest.raises(ValueError):
        fixtures.cell_tokens(Decimal("1.00"), Decimal("1000"), Decimal("1"), Decimal("3"))


def test_mae_reference_is_metadata_only():
    ref = fixtures.mae_reference()
    assert len(ref) == 8 and ref["GPT-5.2"]["embedding_knn"] == 0.0458
    # published averages come from unrounded rows; the LR column drifts by 2e-4
    for col, avg in {"mean": 0.0398, "prompt_length_lr": 0.0394, "embedding_knn": 0.0306}.items():
        assert sum(r[col] for r in ref.values()) / 8 == pytest.approx(avg, abs=3e-4)
