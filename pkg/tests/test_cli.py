import json
import subprocess
import sys

import pytest

from costaudit import __version__
from costaudit.cli import main
from costaudit.errors import InvariantViolation
from costaudit.report import MONEY, RATIO, Report, dumps_json, render


@pytest.fixture(autouse=True)
def fixed_clock(monkeypatch):
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "1772236800")


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def run_json(capsys, *argv):
    code, out, err = run(capsys, *argv)
    assert code == 0, err
    return json.loads(out)


def table(doc, name):
    t = doc["payload"]["tables"][name]
    return [dict(zip(t["columns"], row)) for row in t["rows"]]


def test_envelope_fields(capsys):
    doc = run_json(capsys, "audit", "--paper-fixture")
    assert set(doc) == {"tool_version", "catalog_snapshot_date", "command", "parameters", "payload", "generated_at"}
    assert doc["tool_version"] == __version__
    assert doc["catalog_snapshot_date"] == "2026-02-28"
    assert doc["generated_at"] == "2026-02-28T00:00:00Z"


def test_audit_values(capsys):
    doc = run_json(capsys, "audit", "--paper-fixture")
    rows = {r["model_id"]: r for r in table(doc, "cost_usd")}
    assert rows["Gemini 3 Flash"]["MMLUPro"] == 219.47
    assert rows["Gemini 3 Flash"]["total"] == pytest.approx(642.97, abs=1e-4)


def test_reversals_all(capsys):
    doc = run_json(capsys, "reversals", "--paper-fixture", "--task", "ALL")
    s = doc["payload"]["summary"]
    assert (s["reversal_count"], s["pairs"]) == (55, 252)
    assert s["reversal_rate"] == pytest.approx(0.2183, abs=1e-4)


def test_ablate_average_row(capsys):
    doc = run_json(capsys, "ablate", "--paper-fixture")
    avg = table(doc, "per_task")[-1]
    assert avg["task_id"] == "AVERAGE"
    assert (round(avg["tau_actual"], 3), round(avg["tau_ablated"], 3)) == (0.563, 0.873)


def test_predict_is_byte_identical(capsys):
    argv = ("predict", "--paper-fixture", "--baseline", "knn", "--k", "5", "--seed", "7")
    a = run(capsys, *argv)
    b = run(capsys, *argv)
    assert a[0] == 0 and a == b


@pytest.mark.parametrize("fmt", ["table", "csv"])
def test_other_formats(capsys, fmt):
    code, out, _ = run(capsys, "audit", "--paper-fixture", "--format", fmt)
    assert code == 0 and "2026-02-28" in out
    assert "219.47" in out


def test_human_table_uses_two_decimals(capsys):
    _, out, _ = run(capsys, "audit", "--paper-fixture", "--format", "table")
    assert "526.60" in out and "526.6000" not in out


def test_json_round_trip(capsys):
    _, out, _ = run(capsys, "variance", "--paper-fixture")
    assert dumps_json(json.loads(out)) == out


@pytest.mark.parametrize("cmd", ["breakdown", "variance", "predict"])
def test_each_command_runs(capsys, cmd):
    doc = run_json(capsys, cmd, "--paper-fixture")
    assert doc["command"] == cmd and doc["payload"]["tables"]


def test_empty_ledger(capsys, tmp_path, reference_catalog):
    cat = tmp_path / "c.csv"
    from costaudit.catalog import write_catalog_csv

    write_catalog_csv(reference_catalog, cat)
    led = tmp_path / "l.jsonl"
    led.write_text("")
    code, _, err = run(capsys, "audit", "--catalog", str(cat), "--ledger", str(led))
    assert code == 1 and "empty ledger" in err


@pytest.mark.parametrize(
    "argv,needle",
    [
        (["reversals", "--paper-fixture", "--task", "Nope"], "unknown task"),
        (["breakdown", "--paper-fixture", "--task", "Nope"], "unknown task"),
        (["audit", "--paper-fixture", "--ledger", "x.jsonl"], "conflicts"),
        (["audit"], "--catalog is required"),
        (["predict", "--paper-fixture", "--baseline", "lr", "--k", "3"], "only apply"),
        (["audit", "--paper-fixture", "--format", "xml"], "invalid choice"),
    ],
)
def test_input_errors_exit_1(capsys, argv, needle):
    try:
        code = main(argv)
    except SystemExit as exc:  # argparse usage errors
        code = exc.code
    assert code == 1 and needle in capsys.readouterr().err


def test_invariant_violation_exits_2(capsys, monkeypatch):
    import costaudit.cli as cli

    def boom(args):
        raise InvariantViolation("tau identity")

    monkeypatch.setitem(cli.COMMANDS, "audit", boom)
    code, _, err = run(capsys, "audit", "--paper-fixture")
    assert code == 2 and "invariant" in err


def test_collect_dry_run(capsys, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"endpoint_url": "http://unused", "model_id": "GPT-5.2"}))
    queries = tmp_path / "q.jsonl"
    queries.write_text('{"query_id": "q1", "dataset_id": "AIME", "text": "hi"}\n')
    canned = tmp_path / "canned"
    canned.mkdir()
    (canned / "default.json").write_text(
        json.dumps({"usage": {"prompt_tokens": 10, "completion_tokens": 100, "completion_tokens_details": {"reasoning_tokens": 60}}})
    )
    ledger = tmp_path / "out.jsonl"
    argv = ["collect", "--config", str(cfg), "--queries", str(queries), "--ledger", str(ledger),
            "--trials", "6", "--dry-run", str(canned), "--paper-fixture"]
    doc = run_json(capsys, *argv)
    assert doc["payload"]["summary"]["records"] == 6
    assert doc["payload"]["summary"]["spent_usd"] == pytest.approx(6 * (10 * 1.75 + 100 * 14) / 1e6, abs=1e-4)
    assert len(ledger.read_text().splitlines()) == 6
    code, _, err = run(capsys, *argv)
    assert code == 1 and "already present" in err
    assert len(ledger.read_text().splitlines()) == 6


def test_decimals_flag():
    r = Report("x", {}, None)
    r.note("money", 1.23456789, MONEY)
    r.note("ratio", 0.123456789, RATIO)
    doc = json.loads(render(r, "json", decimals=2))
    assert doc["payload"]["summary"] == {"money": 1.23, "ratio": 0.123457}
    assert json.loads(render(r))["payload"]["summary"]["money"] == 1.2346


def test_console_script_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "costaudit.cli", "reversals", "--paper-fixture", "--task", "ArenaHard", "--format", "csv"],
        capture_output=True, text=True, check=True,
    )
    assert "reversal_count,3" in proc.stdout
