import io
import json
import os
from pathlib import Path

import pytest

from capsule_router.bench import generate_synthetic_catalog
from capsule_router.mcp_surface import (
    APPLICATION_ERROR_CODES,
    METHOD_NOT_FOUND,
    PARSE_ERROR,
    McpServer,
    handle_request,
    list_meta_tools,
    meta_surface_text,
    meta_surface_tokens,
)
from capsule_router.router import GovernanceProfile, Router

from conftest import Clock, counter_ids

GOLDEN = Path(__file__).parent / "golden"
ROUTER_TOKENS = 293  # frozen for this build's descriptor texts

WIRE_SCRIPT = [
    {"jsonrpc": "2.0", "id": 1, "method": "initialize", "params": {"protocolVersion": "2025-06-18"}},
    {"jsonrpc": "2.0", "method": "notifications/initialized"},
    {"jsonrpc": "2.0", "id": 2, "method": "tools/list"},
    {"jsonrpc": "2.0", "id": 3, "method": "tools/call",
     "params": {"name": "search_tools", "arguments": {"query": "send a slack message", "limit": 3}}},
    {"jsonrpc": "2.0", "id": 4, "method": "tools/call",
     "params": {"name": "resolve_tools", "arguments": {"query": "send a slack message"}}},
    {"jsonrpc": "2.0", "id": 5, "method": "tools/call",
     "params": {"name": "describe_tool", "arguments": {"session_id": "s-0001", "tool_id": "slack_send_message"}}},
    {"jsonrpc": "2.0", "id": 6, "method": "tools/call",
     "params": {"name": "call_tool", "arguments": {"session_id": "s-0001", "tool_id": "slack_send_message",
                                                   "arguments": {"channel": "#ops", "text": "deploy done"}}}},
    {"jsonrpc": "2.0", "id": 7, "method": "tools/call",
     "params": {"name": "call_tool", "arguments": {"session_id": "s-0001", "tool_id": "csv_pivot",
                                                   "arguments": {"input_path": "data.csv"}}}},
    {"jsonrpc": "2.0", "id": 8, "method": "tools/call", "params": {"name": "list_profiles", "arguments": {}}},
    {"jsonrpc": "2.0", "id": 9, "method": "resources/list"},
]


def echo_executor(tool_id, version, arguments):
    return 0, f"{tool_id}@{version} {sorted(arguments)}"


@pytest.fixture
def server(small_catalog):
    profile = GovernanceProfile("default", credential_scope=frozenset({"slack-bot"}))
    router = Router(small_catalog, [profile], clock=Clock(), id_factory=counter_ids())
    return McpServer(router, "default", echo_executor)


def run_wire(server, lines):
    out = io.StringIO()
    server.serve(io.StringIO("".join(line + "\n" for line in lines)), out)
    return out.getvalue().splitlines()


# -- surface ------------------------------------------------------------------


def test_five_descriptors():
    names = [d.name for d in list_meta_tools()]
    assert names == ["search_tools", "resolve_tools", "describe_tool", "call_tool", "list_profiles"]


def test_surface_tokens_golden():
    assert meta_surface_tokens() == ROUTER_TOKENS
    assert 150 <= ROUTER_TOKENS <= 500


def test_surface_independent_of_catalog(small_catalog):
    def listed(catalog):
        s = McpServer(Router(catalog), "default", echo_executor)
        return json.dumps(s.handle_request({"jsonrpc": "2.0", "id": 1, "method": "tools/list"}), sort_keys=True)

    base = listed(small_catalog)
    for n in (10, 250):
        assert listed(generate_synthetic_catalog(5, n)) == base


def test_descriptor_edit_changes_token_count(monkeypatch):
    import capsule_router.mcp_surface as m

    edited = (m.META_TOOLS[0].__class__(m.META_TOOLS[0].name, m.META_TOOLS[0].description + " Extra words here.",
                                        m.META_TOOLS[0].input_schema),) + m.META_TOOLS[1:]
    monkeypatch.setattr(m, "META_TOOLS", edited)
    assert m.meta_surface_tokens() != ROUTER_TOKENS


# -- dispatch -----------------------------------------------------------------


def test_initialize(server):
    r = server.handle_request({"jsonrpc": "2.0", "id": "a", "method": "initialize"})
    assert r["id"] == "a" and r["result"]["protocolVersion"] == "2025-06-18"
    assert "tools" in r["result"]["capabilities"]


def test_parse_error_keeps_loop_alive(server):
    lines = run_wire(server, ['{"jsonrpc": "2.0", "id": 1, "method": ', json.dumps(
        {"jsonrpc": "2.0", "id": 2, "method": "ping"})])
    first, second = (json.loads(x) for x in lines)
    assert first["error"]["code"] == PARSE_ERROR and first["id"] is None
    assert second == {"jsonrpc": "2.0", "id": 2, "result": {}}


def test_unknown_method_and_notifications(server):
    r = server.handle_request({"jsonrpc": "2.0", "id": 5, "method": "bogus"})
    assert r["error"]["code"] == METHOD_NOT_FOUND and r["id"] == 5
    assert server.handle_request({"jsonrpc": "2.0", "method": "bogus"}) is None
    assert server.handle_request({"jsonrpc": "2.0", "method": "tools/list"}) is None


def test_invalid_requests(server):
    assert server.handle_request([1, 2])["error"]["code"] == -32600
    assert server.handle_request({"id": 1, "method": "ping"})["error"]["code"] == -32600
    bad = {"jsonrpc": "2.0", "id": 1, "method": "tools/call", "params": {"name": "resolve_tools", "arguments": {}}}
    assert server.handle_request(bad)["error"]["code"] == -32602
    bad["params"] = {"name": "nope", "arguments": {}}
    assert server.handle_request(bad)["error"]["code"] == -32602


def _call(server, name, **args):
    return handle_request(server, {"jsonrpc": "2.0", "id": 1, "method": "tools/call",
                                   "params": {"name": name, "arguments": args}})


def test_search_returns_cards_not_schemas(server):
    r = _call(server, "search_tools", query="send slack message", limit=5)
    tools = json.loads(r["result"]["content"][0]["text"])["tools"]
    assert tools[0]["tool_id"] == "slack_send_message"
    text = r["result"]["content"][0]["text"]
    assert "runtime_class" not in text and "Bot token." not in text
    assert server.router.query_audit(event="resolve") == []


def test_application_error_codes(server):
    r = _call(server, "resolve_tools", query="csv", profile="ghost")
    assert r["error"]["code"] == APPLICATION_ERROR_CODES["UNKNOWN_PROFILE"] == -32003
    assert r["error"]["data"] == {"error": "UNKNOWN_PROFILE"}
    sid = json.loads(_call(server, "resolve_tools", query="pivot csv")["result"]["content"][0]["text"])["session_id"]
    r = _call(server, "call_tool", session_id=sid, tool_id="slack_send_message", arguments={})
    assert r["error"]["code"] == -32001
    server.router.clock.advance(10_000)
    r = _call(server, "describe_tool", session_id=sid, tool_id="csv_pivot")
    assert r["error"]["code"] == -32002


def test_tool_exit_nonzero_is_result_with_error_flag(small_catalog):
    router = Router(small_catalog, clock=Clock(), id_factory=counter_ids())
    s = McpServer(router, "default", lambda t, v, a: (2, "usage"))
    sid = json.loads(_call(s, "resolve_tools", query="pivot csv")["result"]["content"][0]["text"])["session_id"]
    r = _call(s, "call_tool", session_id=sid, tool_id="csv_pivot")
    assert r["result"]["isError"] is True
    assert json.loads(r["result"]["content"][0]["text"]) == {"exit_status": 2, "output": "usage"}


# -- golden transcript --------------------------------------------------------


def test_wire_golden_transcript(server):
    requests = [json.dumps(m, sort_keys=True) for m in WIRE_SCRIPT]
    responses = run_wire(server, requests)
    path = GOLDEN / "wire_session.jsonl"
    if os.environ.get("UPDATE_GOLDEN"):
        path.parent.mkdir(exist_ok=True)
        path.write_text("\n".join(responses) + "\n")
    assert responses == path.read_text().splitlines()
    by_id = {json.loads(r)["id"]: json.loads(r) for r in responses}
    assert len(by_id[2]["result"]["tools"]) == 5
    assert by_id[7]["error"]["code"] == -32001
    assert len(responses) == len(WIRE_SCRIPT) - 1  # the notification gets no reply
