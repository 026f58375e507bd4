import json
import threading
from dataclasses import replace

import pytest
from hypothesis import given
from hypothesis import strategies as st

from capsule_router.bench import generate_synthetic_capsules
from capsule_router.catalog import (
    Catalog,
    classify_rw,
    derive_card,
    estimate_tokens,
    import_mcp_listing,
    load_listing,
    open_catalog,
    register_capsule,
    render_full_schema,
)
from capsule_router.errors import CatalogError

from conftest import T0, csv_pivot_contract, make_capsule, slack_contract

# -- estimate_tokens ----------------------------------------------------------


@pytest.mark.parametrize("text, n", [("", 0), ("a", 1), ("abcd", 1), ("abcde", 2), ("é" * 8, 2)])
def test_estimate_tokens(text, n):
    assert estimate_tokens(text) == n


def test_lite_naive_characters():
    # 4 x the reported Lite naive token count
    assert estimate_tokens("x" * 358_660) == 89_665


@given(st.text())
def test_estimate_is_ceiling_of_quarter(text):
    n = estimate_tokens(text)
    assert 4 * n >= len(text) > 4 * (n - 1)


# -- schema and card ----------------------------------------------------------


def test_schema_is_deterministic_and_local():
    a = make_capsule(csv_pivot_contract(description="Pivot rows."))
    b = make_capsule(csv_pivot_contract(description="Pivot rows by key."))
    sa, sb = render_full_schema(a), render_full_schema(b)
    assert sa == render_full_schema(a)
    assert sa.replace("Pivot rows.", "Pivot rows by key.") == sb


def test_schema_lists_everything():
    s = render_full_schema(make_capsule(slack_contract()))
    for needle in ("slack_send_message", "channel", "text", "message_id", "SLACK_BOT_TOKEN", "network_api"):
        assert needle in s
    assert s.index("- channel") < s.index("- text")


@pytest.mark.parametrize(
    "name, description, rw",
    [
        ("list_invoices", "", "read"),
        ("sync_records", "fetches and updates rows", "read_write"),
        ("csv_pivot", "Pivot a CSV file.", "unknown"),
        ("slack_send_message", "", "write"),
        ("uploader", "Uploading files", "write"),
        ("mover", "Moving and downloading", "read_write"),
    ],
)
def test_classify_rw(name, description, rw):
    assert classify_rw(name, description) == rw


def test_card_fields():
    cap = make_capsule(slack_contract())
    card = derive_card(cap)
    assert card.tool_id == "slack_send_message" and card.version == 1
    assert card.rw_class == "write"
    assert card.param_names == ("channel", "text")
    assert card.lifecycle == "approved"
    assert card.schema_tokens == estimate_tokens(render_full_schema(cap))
    assert card.card_tokens < card.schema_tokens


def test_card_summary_is_word_boundary_prefix():
    desc = "word " * 100
    card = derive_card(make_capsule(csv_pivot_contract(description=desc)))
    assert len(card.summary) <= 200 and desc.startswith(card.summary) and not card.summary.endswith(" ")


def test_synthetic_corpus_card_ratio():
    caps = generate_synthetic_capsules(3, 200)
    cards = [derive_card(c) for c in caps]
    assert all(c.card_tokens < c.schema_tokens for c in cards)
    assert sum(c.card_tokens for c in cards) / sum(c.schema_tokens for c in cards) <= 0.45
    # additivity: per-tool estimates sum to the naive total
    assert sum(c.schema_tokens for c in cards) == sum(estimate_tokens(render_full_schema(c)) for c in caps)


# -- register / open ----------------------------------------------------------


def test_first_registration_and_conflict(tmp_path):
    cat = open_catalog(tmp_path)
    assert register_capsule(cat, make_capsule()) == ("csv_pivot", 1)
    with pytest.raises(CatalogError) as e:
        register_capsule(cat, make_capsule())
    assert e.value.code == "VERSION_CONFLICT"
    with pytest.raises(CatalogError):
        register_capsule(cat, make_capsule(version=3))


def test_store_layout(tmp_path):
    cat = open_catalog(tmp_path)
    cat.register(make_capsule())
    vdir = tmp_path / "tools" / "csv_pivot" / "1"
    assert (vdir / "capsule.json").exists() and (vdir / "cli.py").exists()
    assert (tmp_path / "tools" / "csv_pivot" / "card.json").exists()
    index = json.loads((tmp_path / "index.json").read_text())
    assert index["tools"]["csv_pivot"] == {"versions": [1], "pinned": None}
    assert not list((tmp_path / "tools" / "csv_pivot").glob(".staging*"))


def test_empty_root(tmp_path):
    cat = open_catalog(tmp_path / "fresh")
    assert len(cat) == 0 and cat.entries == {}


def test_reopen_round_trip(tmp_path):
    cat = open_catalog(tmp_path)
    caps = [make_capsule(), make_capsule(slack_contract()), make_capsule(csv_pivot_contract(name="csv_filter"))]
    for c in caps:
        cat.register(c)
    again = open_catalog(tmp_path)
    assert len(again) == 3
    for c in caps:
        assert again.card(c.tool_id) == derive_card(c)
        assert again.card(c.tool_id).to_json() == (tmp_path / "tools" / c.tool_id / "card.json").read_text()


def test_latest_version_unless_pinned(tmp_path):
    cat = open_catalog(tmp_path)
    cat.register(make_capsule(csv_pivot_contract(description="First.")))
    cat.register(make_capsule(csv_pivot_contract(description="Second."), version=2))
    assert open_catalog(tmp_path).card("csv_pivot").version == 2
    cat.set_pin("csv_pivot", 1)
    reopened = open_catalog(tmp_path)
    assert reopened.card("csv_pivot").version == 1
    assert reopened.capsule("csv_pivot").governance.pinned_version == 1
    with pytest.raises(CatalogError):
        cat.set_pin("csv_pivot", 7)


def test_edited_artifact_quarantines_only_that_tool(tmp_path):
    cat = open_catalog(tmp_path)
    cat.register(make_capsule())
    cat.register(make_capsule(slack_contract()))
    (tmp_path / "tools" / "slack_send_message" / "1" / "README.md").write_text("tampered")
    again = open_catalog(tmp_path)
    assert set(again.quarantined) == {"slack_send_message"}
    assert again.quarantined["slack_send_message"].code == "CORRUPT_CAPSULE"
    assert [c.tool_id for c in again.cards] == ["csv_pivot"]


def test_unknown_extra_files_tolerated(tmp_path):
    cat = open_catalog(tmp_path)
    cat.register(make_capsule())
    (tmp_path / "notes.txt").write_text("hi")
    (tmp_path / "tools" / "csv_pivot" / "1" / "extra.log").write_text("x")
    (tmp_path / "tools" / "csv_pivot" / "scratch").mkdir()
    assert len(open_catalog(tmp_path)) == 1


def test_version_gap_is_corrupt(tmp_path):
    cat = open_catalog(tmp_path)
    cat.register(make_capsule())
    cat.register(make_capsule(version=2))
    import shutil

    shutil.rmtree(tmp_path / "tools" / "csv_pivot" / "1")
    assert "csv_pivot" in open_catalog(tmp_path).quarantined


def test_governance_update_persists(tmp_path):
    cat = open_catalog(tmp_path)
    cat.register(make_capsule(lifecycle="draft"))
    gov = replace(cat.capsule("csv_pivot").governance, lifecycle="pending_review")
    cat.update_governance("csv_pivot", gov)
    assert cat.card("csv_pivot").lifecycle == "pending_review"
    assert open_catalog(tmp_path).card("csv_pivot").lifecycle == "pending_review"


def test_concurrent_registration_is_serialized(tmp_path):
    cat = open_catalog(tmp_path)
    caps = [make_capsule(csv_pivot_contract(name=f"tool_{i}")) for i in range(20)]
    threads = [threading.Thread(target=cat.register, args=(c,)) for c in caps]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert len(open_catalog(tmp_path)) == 20


# -- MCP listing import -------------------------------------------------------


def _listing(n=12, server="acme-files"):
    return [
        {
            "name": f"tool{i}",
            "description": f"Remote tool number {i}.",
            "parameters": [{"name": "path", "kind": "path", "required": True}],
            "server": server,
        }
        for i in range(n)
    ]


def test_import_listing_pending_review(tmp_path):
    cat = open_catalog(tmp_path)
    ids = import_mcp_listing(cat, _listing(), created_at=T0)
    assert len(ids) == 12
    caps = [cat.capsule(i) for i in ids]
    assert all(c.governance.lifecycle == "pending_review" for c in caps)
    assert all(c.provenance.source == "imported_mcp" and c.provenance.origin == "acme-files" for c in caps)
    assert all(c.implementation is None for c in caps)
    assert len(open_catalog(tmp_path)) == 12


def test_reimport_is_duplicate():
    cat = Catalog()
    import_mcp_listing(cat, _listing(3), created_at=T0)
    with pytest.raises(CatalogError) as e:
        import_mcp_listing(cat, _listing(3), created_at=T0)
    assert e.value.code == "DUPLICATE_IMPORT"
    assert len(e.value.details["duplicates"]) == 3


@pytest.mark.parametrize(
    "bad",
    [
        {"description": "x", "parameters": [], "server": "s"},
        {"name": "t", "parameters": [], "server": "s"},
        {"name": "t", "description": "x", "parameters": [{"name": "p"}], "server": "s"},
        {"name": "t", "description": "x", "parameters": []},
        "not a dict",
    ],
)
def test_malformed_descriptor(bad):
    cat = Catalog()
    with pytest.raises(CatalogError) as e:
        import_mcp_listing(cat, _listing(2) + [bad], created_at=T0)
    assert e.value.code == "MALFORMED_DESCRIPTOR"
    assert len(cat) == 0  # whole batch rejected


def test_load_listing(tmp_path):
    p = tmp_path / "listing.json"
    p.write_text(json.dumps(_listing(2)))
    assert len(load_listing(p)) == 2
    p.write_text("{}")
    with pytest.raises(CatalogError):
        load_listing(p)
