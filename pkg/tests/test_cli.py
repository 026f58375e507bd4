import csv
import json
import subprocess
import sys

import pytest

from capsule_router.bench import SUITES_DIR
from capsule_router.catalog import open_catalog
from capsule_router.cli import main
from capsule_router.executor import BundleExecutor, argv_for
from capsule_router.router import Router

from conftest import make_capsule, slack_contract
from e2e_corpus import write_corpus

LITE = str(SUITES_DIR / "lite.json")


def test_argv_for():
    assert argv_for({"b": 1, "a": "x", "flag": True, "off": False, "skip": None}) == [
        "--a", "x", "--b", "1", "--flag", "--no-off"]


# -- bench router -------------------------------------------------------------


def test_bench_table(tmp_path, capsys):
    assert main(["bench", "router", "--suite", LITE, "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert out.startswith("suite") and "lite" in out and "1.000" in out
    assert sorted(p.name for p in tmp_path.iterdir()) == ["lite.exposure.txt", "lite.results.txt"]


def test_bench_csv(tmp_path, capsys):
    assert main(["bench", "router", "--suite", LITE, "--emit", "csv", "--out", str(tmp_path)]) == 0
    rows = list(csv.DictReader((tmp_path / "lite.results.csv").open()))
    assert rows[0]["micro_f1"] == "1.000" and rows[0]["tools"] == "250"
    exposure = list(csv.DictReader((tmp_path / "lite.exposure.csv").open()))
    assert exposure[0]["router_tok"].isdigit()


def test_bench_jsonl(tmp_path):
    assert main(["bench", "router", "--suite", LITE, "--emit", "jsonl", "--out", str(tmp_path)]) == 0
    records = [json.loads(l) for l in (tmp_path / "lite.jsonl").read_text().splitlines()]
    assert len(records) == 9 and records[-1]["record"] == "aggregate"


def test_bench_bad_suite(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"suite": "x", "tier": "bogus", "cases": []}))
    assert main(["bench", "router", "--suite", str(bad), "--out", str(tmp_path)]) == 2
    assert "INVALID_SUITE" in capsys.readouterr().err
    assert main(["bench", "router", "--suite", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == 2


# -- validate -----------------------------------------------------------------


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    return {e.name: e for e in write_corpus(tmp_path_factory.mktemp("corpus"))}


def _validate(entry, tmp_path, capsys):
    argv = ["validate", "--bundle", str(entry.bundle_dir), "--patterns", str(entry.bundle_dir / "patterns.json")]
    if entry.inputs:
        p = tmp_path / "inputs.json"
        p.write_text(json.dumps(entry.inputs))
        argv += ["--inputs", str(p)]
    code = main(argv)
    return code, capsys.readouterr().out


def test_validate_clean_bundle(corpus, tmp_path, capsys):
    code, out = _validate(corpus["csv_pivot"], tmp_path, capsys)
    report = json.loads(out)
    assert code == 0 and report["sandbox"]["status"] == "passed" and report["patterns"]["recall"] == 1.0


def test_validate_pattern_miss(corpus, tmp_path, capsys):
    code, out = _validate(corpus["slack_send_message"], tmp_path, capsys)
    report = json.loads(out)
    assert code == 1 and report["patterns"]["fn"] == 1 and report["sandbox"]["status"] == "passed"
    assert "xoxb-fixture" not in out


def test_validate_live_failure(corpus, tmp_path, capsys):
    code, out = _validate(corpus["pdf_merge"], tmp_path, capsys)
    report = json.loads(out)
    assert code == 1 and report["patterns"]["recall"] == 1.0
    assert report["sandbox"]["error_code"] == "UNEXPECTED_EXIT"


# -- serve --------------------------------------------------------------------


def _rpc(i, name, **arguments):
    return json.dumps({"jsonrpc": "2.0", "id": i, "method": "tools/call",
                       "params": {"name": name, "arguments": arguments}})


def test_serve_end_to_end(tmp_path):
    root = tmp_path / "catalog"
    cat = open_catalog(root)
    cat.register(make_capsule())
    cat.register(make_capsule(slack_contract()))
    data = tmp_path / "data.csv"
    data.write_text("a,b\n1,2\n")

    first = subprocess.run(
        [sys.executable, "-m", "capsule_router", "serve", "--root", str(root)],
        input="\n".join([
            json.dumps({"jsonrpc": "2.0", "id": 1, "method": "initialize"}),
            json.dumps({"jsonrpc": "2.0", "id": 2, "method": "tools/list"}),
            _rpc(3, "resolve_tools", query="pivot csv file"),
        ]) + "\n",
        capture_output=True, text=True, timeout=60,
    )
    replies = [json.loads(l) for l in first.stdout.splitlines()]
    assert [r["id"] for r in replies] == [1, 2, 3]
    assert len(replies[1]["result"]["tools"]) == 5
    session = json.loads(replies[2]["result"]["content"][0]["text"])
    assert "csv_pivot" in [t["tool_id"] for t in session["resolved"]]

    # A second process sees the persisted session and runs the real wrapper.
    second = subprocess.run(
        [sys.executable, "-m", "capsule_router", "serve", "--root", str(root)],
        input="\n".join([
            _rpc(4, "call_tool", session_id=session["session_id"], tool_id="csv_pivot",
                 arguments={"input_path": str(data)}),
            _rpc(5, "call_tool", session_id=session["session_id"], tool_id="slack_send_message",
                 arguments={"channel": "#x", "text": "hi"}),
        ]) + "\n",
        capture_output=True, text=True, timeout=60,
    )
    call, denied = (json.loads(l) for l in second.stdout.splitlines())
    payload = json.loads(call["result"]["content"][0]["text"])
    assert payload["exit_status"] == 0 and "a" in payload["output"]
    assert denied["error"]["code"] == -32001
    denies = Router(open_catalog(root), root=root).query_audit(event="deny")
    assert [(d.tool_id, d.error_code) for d in denies] == [("slack_send_message", "NOT_IN_SESSION")]


def test_serve_unknown_profile(tmp_path, capsys):
    open_catalog(tmp_path)
    assert main(["serve", "--root", str(tmp_path), "--profile", "ghost"]) == 2
    assert "UNKNOWN_PROFILE" in capsys.readouterr().err


def test_executor_exports_mapped_secret_only(tmp_path, monkeypatch):
    cat = open_catalog(tmp_path)
    impl = "import os\n\n\ndef run(channel, text):\n    return [os.environ.get('SLACK_BOT_TOKEN'), 'UNRELATED' in os.environ]\n"
    cat.register(make_capsule(slack_contract(), impl=impl, credential_mappings={"SLACK_BOT_TOKEN": "env:BOT"}))
    monkeypatch.setenv("BOT", "tok-123")
    monkeypatch.setenv("UNRELATED", "leak")
    code, out = BundleExecutor(cat)("slack_send_message", 1, {"channel": "#a", "text": "b"})
    assert code == 0 and '"tok-123", false' in out


def test_executor_without_wrapper(tmp_path):
    from capsule_router.catalog import import_mcp_listing

    from conftest import T0

    cat = open_catalog(tmp_path)
    [tid] = import_mcp_listing(cat, [{"name": "ping", "description": "Ping.", "parameters": [], "server": "remote"}],
                               created_at=T0)
    assert BundleExecutor(cat)(tid, 1, {})[0] == 127
