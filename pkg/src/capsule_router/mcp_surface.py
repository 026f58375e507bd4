"""Newline-delimited JSON-RPC 2.0 server exposing the five router meta-tools.

The advertised tool list never depends on the catalog, so its token cost is
a constant of the build.
"""

from __future__ import annotations

import json
import logging
import sys
from dataclasses import dataclass
from typing import IO, Any, Mapping

from .catalog import estimate_tokens
from .errors import ForgeError
from .router import DEFAULT_PROFILE_ID, Executor, Router

logger = logging.getLogger(__name__)

PROTOCOL_VERSION = "2025-06-18"
SERVER_NAME = "capsule-router"
SERVER_VERSION = "0.1.0"

PARSE_ERROR = -32700
INVALID_REQUEST = -32600
METHOD_NOT_FOUND = -32601
INVALID_PARAMS = -32602
INTERNAL_ERROR = -32603

APPLICATION_ERROR_CODES = {
    "NOT_IN_SESSION": -32001,
    "SESSION_EXPIRED": -32002,
    "UNKNOWN_PROFILE": -32003,
    "MISSING_CREDENTIAL_MAPPING": -32004,
    "LIFECYCLE_CHANGED": -32005,
    "EMPTY_QUERY": -32006,
    "EXECUTOR_FAILURE": -32007,
    "UNKNOWN_TOOL": -32008,
    "UNKNOWN_SESSION": -32009,
    "INVALID_K": -32010,
    "AUDIT_IO_FAILURE": -32011,
}


@dataclass(frozen=True)
class MetaToolDescriptor:
    name: str
    description: str
    input_schema: Mapping[str, Any]

    def to_dict(self) -> dict[str, Any]:
        return {"name": self.name, "description": self.description, "inputSchema": self.input_schema}


def _schema(props: dict[str, dict[str, str]], required: list[str]) -> dict[str, Any]:
    return {"type": "object", "properties": props, "required": required}


_STR = {"type": "string"}
_INT = {"type": "integer"}

META_TOOLS: tuple[MetaToolDescriptor, ...] = (
    MetaToolDescriptor(
        "search_tools",
        "Search the governed catalog and return compact tool cards. Creates no session.",
        _schema({"query": _STR, "profile": _STR, "limit": _INT}, ["query"]),
    ),
    MetaToolDescriptor(
        "resolve_tools",
        "Resolve a task intent into a short-lived session of at most k tools.",
        _schema({"query": _STR, "profile": _STR, "k": _INT}, ["query"]),
    ),
    MetaToolDescriptor(
        "describe_tool",
        "Return the full schema of a tool in a session.",
        _schema({"session_id": _STR, "tool_id": _STR}, ["session_id", "tool_id"]),
    ),
    MetaToolDescriptor(
        "call_tool",
        "Call a tool through the session gate.",
        _schema({"session_id": _STR, "tool_id": _STR, "arguments": {"type": "object"}}, ["session_id", "tool_id"]),
    ),
    MetaToolDescriptor(
        "list_profiles",
        "List governance profiles with session size and allowed lifecycles.",
        _schema({}, []),
    ),
)


def list_meta_tools() -> list[MetaToolDescriptor]:
    return list(META_TOOLS)


def meta_surface_text() -> str:
    return json.dumps([d.to_dict() for d in META_TOOLS], sort_keys=True, separators=(",", ":"))


def meta_surface_tokens() -> int:
    return estimate_tokens(meta_surface_text())


class _ParamError(Exception):
    pass


def _need(args: Mapping[str, Any], key: str, kind: type) -> Any:
    value = args.get(key)
    if not isinstance(value, kind) or isinstance(value, bool) and kind is int:
        raise _ParamError(f"'{key}' must be a {kind.__name__}")
    return value


def _opt(args: Mapping[str, Any], key: str, kind: type, default: Any) -> Any:
    if args.get(key) is None:
        return default
    return _need(args, key, kind)


def _text(payload: Any) -> dict[str, Any]:
    text = payload if isinstance(payload, str) else json.dumps(payload, sort_keys=True)
    return {"content": [{"type": "text", "text": text}], "isError": False}


def _unavailable_executor(tool_id: str, version: int, arguments: Mapping[str, Any]) -> tuple[int, str]:
    raise RuntimeError("no executor configured")


class McpServer:
    """Dispatches JSON-RPC requests onto a :class:`Router`."""

    def __init__(
        self,
        router: Router,
        default_profile: str = DEFAULT_PROFILE_ID,
        executor: Executor = _unavailable_executor,
    ) -> None:
        self.router = router
        self.default_profile = default_profile
        self.executor = executor

    # -- framing -----------------------------------------------------------

    def handle_line(self, line: str) -> str | None:
        try:
            message = json.loads(line)
        except ValueError as exc:
            return json.dumps(_error(None, PARSE_ERROR, f"Parse error: {exc.msg}"), sort_keys=True)
        response = self.handle_request(message)
        return None if response is None else json.dumps(response, sort_keys=True)

    def serve(self, stdin: IO[str] | None = None, stdout: IO[str] | None = None) -> None:
        stdin = stdin or sys.stdin
        stdout = stdout or sys.stdout
        for line in stdin:
            if not line.strip():
                continue
            out = self.handle_line(line)
            if out is not None:
                stdout.write(out + "\n")
                stdout.flush()

    # -- dispatch ----------------------------------------------------------

    def handle_request(self, message: Any) -> dict[str, Any] | None:
        if not isinstance(message, dict) or message.get("jsonrpc") != "2.0" or not isinstance(message.get("method"), str):
            rid = message.get("id") if isinstance(message, dict) else None
            return _error(rid, INVALID_REQUEST, "Invalid Request")
        is_notification = "id" not in message
        rid = message.get("id")
        method = message["method"]
        params = message.get("params") or {}
        try:
            if not isinstance(params, dict):
                raise _ParamError("params must be an object")
            if method == "initialize":
                result: Any = {
                    "protocolVersion": PROTOCOL_VERSION,
                    "serverInfo": {"name": SERVER_NAME, "version": SERVER_VERSION},
                    "capabilities": {"tools": {"listChanged": False}},
                }
            elif method == "ping":
                result = {}
            elif method == "tools/list":
                result = {"tools": [d.to_dict() for d in META_TOOLS]}
            elif method == "tools/call":
                result = self._call(params)
            else:
                if is_notification:
                    return None
                return _error(rid, METHOD_NOT_FOUND, f"Method not found: {method}")
        except _ParamError as exc:
            response = _error(rid, INVALID_PARAMS, f"Invalid params: {exc}")
            return None if is_notification else response
        except ForgeError as exc:
            code = APPLICATION_ERROR_CODES.get(exc.code, INVALID_PARAMS if exc.code.startswith("INVALID") else -32000)
            response = _error(rid, code, exc.message, {"error": exc.code})
            return None if is_notification else response
        except Exception as exc:  # keep the loop alive
            logger.exception("internal error handling %s", method)
            response = _error(rid, INTERNAL_ERROR, f"Internal error: {type(exc).__name__}")
            return None if is_notification else response
        if is_notification:
            return None
        return {"jsonrpc": "2.0", "id": rid, "result": result}

    def _call(self, params: Mapping[str, Any]) -> dict[str, Any]:
        name = _need(params, "name", str)
        args = params.get("arguments") or {}
        if not isinstance(args, dict):
            raise _ParamError("arguments must be an object")
        r = self.router
        if name == "search_tools":
            ranked = r.search(
                _need(args, "query", str),
                _opt(args, "profile", str, self.default_profile),
                _opt(args, "limit", int, 10),
            )
            return _text({
                "tools": [
                    {
                        "tool_id": c.tool_id,
                        "name": c.name,
                        "summary": c.summary,
                        "tags": list(c.tags),
                        "rw_class": c.rw_class,
                        "score": s,
                    }
                    for c, s in ranked
                ]
            })
        if name == "resolve_tools":
            s = r.resolve_session(
                _need(args, "query", str),
                _opt(args, "profile", str, self.default_profile),
                _opt(args, "k", int, None),
            )
            return _text({
                "session_id": s.session_id,
                "expires_at": s.to_dict()["expires_at"],
                "resolved": [{"tool_id": t.tool_id, "score": t.score} for t in s.resolved],
            })
        if name == "describe_tool":
            return _text(r.describe_tool(_need(args, "session_id", str), _need(args, "tool_id", str)))
        if name == "call_tool":
            call_args = args.get("arguments") or {}
            if not isinstance(call_args, dict):
                raise _ParamError("'arguments' must be an object")
            outcome = r.gate_call(
                _need(args, "session_id", str), _need(args, "tool_id", str), call_args, self.executor
            )
            result = _text({"exit_status": outcome.exit_status, "output": outcome.output})
            result["isError"] = outcome.exit_status != 0
            return result
        if name == "list_profiles":
            return _text({
                "profiles": [
                    {
                        "profile_id": p.profile_id,
                        "k": p.max_session_tools,
                        "allowed_lifecycles": sorted(p.allowed_lifecycles),
                    }
                    for _, p in sorted(r.profiles.items())
                ]
            })
        raise _ParamError(f"unknown tool {name!r}")


def _error(rid: Any, code: int, message: str, data: Any = None) -> dict[str, Any]:
    err: dict[str, Any] = {"code": code, "message": message}
    if data is not None:
        err["data"] = data
    return {"jsonrpc": "2.0", "id": rid, "error": err}


def handle_request(server: McpServer, request: Any) -> dict[str, Any] | None:
    return server.handle_request(request)
