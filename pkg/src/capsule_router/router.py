"""Governed, intent-scoped tool routing.

The router filters catalog cards through a governance profile, scores them
lexically against an intent, binds the best few into a short-lived session
and gates every describe/call against that session.  Each routing event is
written to an append-only audit log that holds argument names only.
"""

from __future__ import annotations

import json
import logging
import re
import threading
import uuid
from functools import lru_cache
from dataclasses import dataclass, replace
from datetime import datetime, timedelta, timezone
from fractions import Fraction
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Sequence

from .capsule import LIFECYCLE_ACTIONS, LIFECYCLES, format_ts, parse_ts, transition_lifecycle
from .catalog import Catalog, CatalogCard, _atomic_write, render_full_schema
from .errors import CapsuleError, CatalogError, RouterError

logger = logging.getLogger(__name__)

DEFAULT_K = 6
DEFAULT_TTL_SECONDS = 900
DEFAULT_ADMISSION_RATIO = 0.35
DEFAULT_PROFILE_ID = "default"

AUDIT_EVENTS = ("search", "resolve", "describe", "call", "deny", "governance_change")
_ARG_NAME = re.compile(r"[A-Za-z_][A-Za-z0-9_.\-]*")

Clock = Callable[[], datetime]
Executor = Callable[[str, int, Mapping[str, Any]], "tuple[int, str]"]
Scorer = Callable[[str, Sequence[CatalogCard]], "list[tuple[CatalogCard, int]]"]


def utcnow() -> datetime:
    return datetime.now(timezone.utc)


# ---------------------------------------------------------------------------
# profiles
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GovernanceProfile:
    """Which capsules may be resolved, and how many per session.

    ``selector`` is ``"all"``, ``{"tools": [...]}`` or ``{"tags": [...]}``.
    """

    profile_id: str
    allowed_lifecycles: frozenset[str] = frozenset({"approved"})
    selector: Any = "all"
    require_sandbox_validated: bool = False
    max_session_tools: int = DEFAULT_K
    session_ttl_seconds: int = DEFAULT_TTL_SECONDS
    credential_scope: frozenset[str] = frozenset()
    admission_ratio: float = DEFAULT_ADMISSION_RATIO

    def __post_init__(self) -> None:
        if self.max_session_tools < 1:
            raise RouterError("INVALID_PROFILE", "max_session_tools must be >= 1")
        if self.session_ttl_seconds < 1:
            raise RouterError("INVALID_PROFILE", "session_ttl_seconds must be >= 1")
        if "blocked" in self.allowed_lifecycles:
            raise RouterError("INVALID_PROFILE", "a profile may never allow blocked tools")
        unknown = set(self.allowed_lifecycles) - set(LIFECYCLES)
        if unknown:
            raise RouterError("INVALID_PROFILE", f"unknown lifecycles {sorted(unknown)}")
        if not 0 <= self.admission_ratio <= 1:
            raise RouterError("INVALID_PROFILE", "admission_ratio must lie in [0, 1]")
        sel = self.selector
        if not (sel == "all" or (isinstance(sel, Mapping) and len(sel) == 1 and set(sel) <= {"tools", "tags"})):
            raise RouterError("INVALID_PROFILE", f"bad selector {sel!r}")

    def selects(self, card: CatalogCard) -> bool:
        if self.selector == "all":
            return True
        if "tools" in self.selector:
            return card.tool_id in self.selector["tools"]
        return bool(set(card.tags) & set(self.selector["tags"]))

    def to_dict(self) -> dict[str, Any]:
        sel = self.selector if self.selector == "all" else {k: sorted(v) for k, v in self.selector.items()}
        return {
            "profile_id": self.profile_id,
            "allowed_lifecycles": sorted(self.allowed_lifecycles),
            "selector": sel,
            "require_sandbox_validated": self.require_sandbox_validated,
            "max_session_tools": self.max_session_tools,
            "session_ttl_seconds": self.session_ttl_seconds,
            "credential_scope": sorted(self.credential_scope),
            "admission_ratio": self.admission_ratio,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "GovernanceProfile":
        return cls(
            profile_id=d["profile_id"],
            allowed_lifecycles=frozenset(d.get("allowed_lifecycles", ["approved"])),
            selector=d.get("selector", "all"),
            require_sandbox_validated=d.get("require_sandbox_validated", False),
            max_session_tools=d.get("max_session_tools", DEFAULT_K),
            session_ttl_seconds=d.get("session_ttl_seconds", DEFAULT_TTL_SECONDS),
            credential_scope=frozenset(d.get("credential_scope", ())),
            admission_ratio=d.get("admission_ratio", DEFAULT_ADMISSION_RATIO),
        )


# ---------------------------------------------------------------------------
# sessions and audit records
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ResolvedTool:
    tool_id: str
    version: int
    score: int


@dataclass(frozen=True)
class RoutingSession:
    session_id: str
    profile_id: str
    query: str
    resolved: tuple[ResolvedTool, ...]
    created_at: datetime
    expires_at: datetime
    state: str = "active"

    @property
    def tool_ids(self) -> list[str]:
        return [r.tool_id for r in self.resolved]

    def entry(self, tool_id: str) -> ResolvedTool | None:
        return next((r for r in self.resolved if r.tool_id == tool_id), None)

    def to_dict(self) -> dict[str, Any]:
        return {
            "session_id": self.session_id,
            "profile_id": self.profile_id,
            "query": self.query,
            "resolved": [{"tool_id": r.tool_id, "version": r.version, "score": r.score} for r in self.resolved],
            "created_at": format_ts(self.created_at),
            "expires_at": format_ts(self.expires_at),
            "state": self.state,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "RoutingSession":
        return cls(
            session_id=d["session_id"],
            profile_id=d["profile_id"],
            query=d["query"],
            resolved=tuple(ResolvedTool(**r) for r in d["resolved"]),
            created_at=parse_ts(d["created_at"]),
            expires_at=parse_ts(d["expires_at"]),
            state=d.get("state", "active"),
        )


@dataclass(frozen=True)
class AuditRecord:
    """One routing event.  Carries argument *names* only; there is no value field."""

    timestamp: datetime
    event: str
    profile_id: str
    outcome: str = "ok"
    session_id: str | None = None
    tool_id: str | None = None
    argument_names: tuple[str, ...] = ()
    error_code: str | None = None
    actor: str | None = None
    action: str | None = None

    def __post_init__(self) -> None:
        if self.event not in AUDIT_EVENTS:
            raise RouterError("INVALID_AUDIT_RECORD", f"unknown event {self.event!r}")
        if self.outcome not in ("ok", "error"):
            raise RouterError("INVALID_AUDIT_RECORD", f"unknown outcome {self.outcome!r}")
        if (self.event == "deny" or self.outcome == "error") and not self.error_code:
            raise RouterError("INVALID_AUDIT_RECORD", "error and deny records must carry an error_code")
        if isinstance(self.argument_names, (str, bytes)) or not all(
            isinstance(n, str) and _ARG_NAME.fullmatch(n) for n in self.argument_names
        ):
            raise RouterError("INVALID_AUDIT_RECORD", "argument_names must be a sequence of plain names")
        object.__setattr__(self, "argument_names", tuple(self.argument_names))

    def to_dict(self) -> dict[str, Any]:
        return {
            "timestamp": format_ts(self.timestamp),
            "event": self.event,
            "profile_id": self.profile_id,
            "outcome": self.outcome,
            "session_id": self.session_id,
            "tool_id": self.tool_id,
            "argument_names": list(self.argument_names),
            "error_code": self.error_code,
            "actor": self.actor,
            "action": self.action,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "AuditRecord":
        allowed = {
            "timestamp", "event", "profile_id", "outcome", "session_id",
            "tool_id", "argument_names", "error_code", "actor", "action",
        }
        extra = set(d) - allowed
        if extra:
            raise RouterError("INVALID_AUDIT_RECORD", f"unexpected fields {sorted(extra)}")
        return cls(**{**d, "timestamp": parse_ts(d["timestamp"]), "argument_names": tuple(d.get("argument_names", ()))})


class AuditLog:
    """Append-only, day-partitioned JSONL log (or an in-memory list when root is None)."""

    def __init__(self, root: str | Path | None = None) -> None:
        self.dir = Path(root) / "audit" if root is not None else None
        self._memory: list[AuditRecord] = []
        self._lock = threading.Lock()

    def append(self, record: AuditRecord) -> None:
        with self._lock:
            if self.dir is None:
                self._memory.append(record)
                return
            path = self.dir / f"audit-{record.timestamp.astimezone(timezone.utc):%Y-%m-%d}.jsonl"
            try:
                self.dir.mkdir(parents=True, exist_ok=True)
                with open(path, "a", encoding="utf-8", newline="\n") as fh:
                    fh.write(json.dumps(record.to_dict(), sort_keys=True) + "\n")
            except OSError as exc:
                raise RouterError("AUDIT_IO_FAILURE", str(exc)) from exc

    def records(self) -> list[AuditRecord]:
        if self.dir is None:
            return list(self._memory)
        out = []
        try:
            for path in sorted(self.dir.glob("audit-*.jsonl")):
                with open(path, encoding="utf-8") as fh:
                    out.extend(AuditRecord.from_dict(json.loads(line)) for line in fh if line.strip())
        except OSError as exc:
            raise RouterError("AUDIT_IO_FAILURE", str(exc)) from exc
        return out

    def query(
        self,
        start: datetime | None = None,
        end: datetime | None = None,
        event: str | None = None,
        tool_id: str | None = None,
        session_id: str | None = None,
    ) -> list[AuditRecord]:
        return [
            r
            for r in self.records()
            if (start is None or r.timestamp >= start)
            and (end is None or r.timestamp < end)
            and (event is None or r.event == event)
            and (tool_id is None or r.tool_id == tool_id)
            and (session_id is None or r.session_id == session_id)
        ]


# ---------------------------------------------------------------------------
# lexical scoring
# ---------------------------------------------------------------------------

NAME_WEIGHT, TAG_WEIGHT, SUMMARY_WEIGHT, PARAM_WEIGHT = 3, 2, 2, 1


def tokenize(text: str) -> set[str]:
    return {t for t in re.split(r"[^a-z0-9]+", text.lower()) if len(t) >= 2}


@lru_cache(maxsize=65536)
def _card_tokens(card: CatalogCard) -> tuple[set[str], set[str], set[str], set[str]]:
    return (
        tokenize(card.name),
        tokenize(" ".join(card.tags)),
        tokenize(card.summary),
        tokenize(" ".join(card.param_names)),
    )


def score_card(query_tokens: set[str], card: CatalogCard) -> int:
    name, tags, summary, params = _card_tokens(card)
    return (
        NAME_WEIGHT * len(query_tokens & name)
        + TAG_WEIGHT * len(query_tokens & tags)
        + SUMMARY_WEIGHT * len(query_tokens & summary)
        + PARAM_WEIGHT * len(query_tokens & params)
    )


def score_cards(query: str, cards: Iterable[CatalogCard]) -> list[tuple[CatalogCard, int]]:
    """Weighted token overlap, best first, ties by tool_id; zero scores dropped."""
    q = tokenize(query)
    if not q:
        return []
    scored = [(c, score_card(q, c)) for c in cards]
    return sorted(((c, s) for c, s in scored if s > 0), key=lambda cs: (-cs[1], cs[0].tool_id))


def admit(ranked: Sequence[tuple[CatalogCard, int]], k: int, ratio: float) -> list[tuple[CatalogCard, int]]:
    """Keep ranked cards scoring at least ``ratio`` x the top score, at most ``k``."""
    if not ranked:
        return []
    r = Fraction(str(ratio))
    top = ranked[0][1]
    return [(c, s) for c, s in ranked if s >= r * top][:k]


# ---------------------------------------------------------------------------
# router
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CallOutcome:
    tool_id: str
    version: int
    exit_status: int
    output: str


class Router:
    """Routing state: catalog, profiles, session store and audit log.

    With ``root`` set, profiles are read from ``<root>/profiles``, sessions
    persist to ``<root>/sessions`` and audit records to ``<root>/audit``.
    """

    def __init__(
        self,
        catalog: Catalog,
        profiles: Iterable[GovernanceProfile] = (),
        *,
        root: str | Path | None = None,
        clock: Clock = utcnow,
        id_factory: Callable[[], str] | None = None,
        scorer: Scorer = score_cards,
    ) -> None:
        self.catalog = catalog
        self.root = Path(root) if root is not None else catalog.root
        self.clock = clock
        self.id_factory = id_factory or (lambda: uuid.uuid4().hex)
        self.scorer = scorer
        self.audit = AuditLog(self.root)
        self._sessions: dict[str, RoutingSession] = {}
        self._lock = threading.RLock()
        self.profiles: dict[str, GovernanceProfile] = {}
        if self.root is not None:
            self.profiles.update(load_profiles(self.root))
        for p in profiles:
            self.profiles[p.profile_id] = p
        self.profiles.setdefault(DEFAULT_PROFILE_ID, GovernanceProfile(DEFAULT_PROFILE_ID))

    # -- helpers -----------------------------------------------------------

    def profile(self, profile_id: str) -> GovernanceProfile:
        try:
            return self.profiles[profile_id]
        except KeyError:
            raise RouterError("UNKNOWN_PROFILE", f"no profile {profile_id!r}") from None

    def add_profile(self, profile: GovernanceProfile, persist: bool = True) -> None:
        with self._lock:
            self.profiles[profile.profile_id] = profile
            if persist and self.root is not None:
                _atomic_write(self.root / "profiles" / f"{profile.profile_id}.json", _dump(profile.to_dict()))

    def _record(self, event: str, profile_id: str, **kw: Any) -> None:
        self.audit.append(AuditRecord(timestamp=self.clock(), event=event, profile_id=profile_id, **kw))

    def _store_session(self, session: RoutingSession) -> None:
        self._sessions[session.session_id] = session
        if self.root is not None:
            _atomic_write(self.root / "sessions" / f"{session.session_id}.json", _dump(session.to_dict()))

    def session(self, session_id: str) -> RoutingSession | None:
        s = self._sessions.get(session_id)
        if s is None and self.root is not None:
            path = self.root / "sessions" / f"{session_id}.json"
            if path.is_file() and re.fullmatch(r"[A-Za-z0-9_\-]+", session_id):
                s = RoutingSession.from_dict(json.loads(path.read_text(encoding="utf-8")))
                self._sessions[session_id] = s
        return s

    def _live_session(self, session_id: str) -> RoutingSession:
        """Session if active; expiry is evaluated lazily here."""
        with self._lock:
            s = self.session(session_id)
            if s is None:
                raise RouterError("UNKNOWN_SESSION", f"no session {session_id!r}")
            if s.state == "active" and self.clock() >= s.expires_at:
                s = replace(s, state="expired")
                self._store_session(s)
            if s.state != "active":
                raise RouterError("SESSION_EXPIRED", f"session {session_id} is {s.state}")
            return s

    def close_session(self, session_id: str) -> RoutingSession:
        with self._lock:
            s = self.session(session_id)
            if s is None:
                raise RouterError("UNKNOWN_SESSION", f"no session {session_id!r}")
            s = replace(s, state="closed")
            self._store_session(s)
            return s

    # -- operations --------------------------------------------------------

    def filter_candidates(self, profile: GovernanceProfile | str) -> list[CatalogCard]:
        if isinstance(profile, str):
            profile = self.profile(profile)
        out = []
        for card in self.catalog.cards:
            if card.lifecycle not in profile.allowed_lifecycles or not profile.selects(card):
                continue
            if profile.require_sandbox_validated:
                if not self.catalog.capsule(card.tool_id).governance.sandbox_validated:
                    continue
            out.append(card)
        return out

    def search(self, query: str, profile_id: str = DEFAULT_PROFILE_ID, limit: int = 10) -> list[tuple[CatalogCard, int]]:
        """Rank cards without creating a session."""
        profile = self.profile(profile_id)
        ranked = self.scorer(query, self.filter_candidates(profile))[: max(limit, 0)]
        self._record("search", profile_id, argument_names=("limit", "query"))
        return ranked

    def resolve_session(self, query: str, profile_id: str = DEFAULT_PROFILE_ID, k: int | None = None) -> RoutingSession:
        profile = self.profile(profile_id)
        if not query or not query.strip():
            raise RouterError("EMPTY_QUERY", "query is empty")
        if k is not None and k < 1:
            raise RouterError("INVALID_K", "k must be >= 1")
        limit = min(k or profile.max_session_tools, profile.max_session_tools)
        ranked = self.scorer(query, self.filter_candidates(profile))
        chosen = admit(ranked, limit, profile.admission_ratio)
        with self._lock:
            now = self.clock()
            session = RoutingSession(
                session_id=self.id_factory(),
                profile_id=profile_id,
                query=query,
                resolved=tuple(ResolvedTool(c.tool_id, c.version, s) for c, s in chosen),
                created_at=now,
                expires_at=now + timedelta(seconds=profile.session_ttl_seconds),
            )
            self._store_session(session)
            self._record("resolve", profile_id, session_id=session.session_id, argument_names=("k", "query"))
        return session

    def _deny(self, session: RoutingSession | None, profile_id: str, tool_id: str, names: Sequence[str], exc: RouterError) -> RouterError:
        self._record(
            "deny",
            profile_id,
            outcome="error",
            session_id=session.session_id if session else None,
            tool_id=tool_id,
            argument_names=tuple(names),
            error_code=exc.code,
        )
        return exc

    def _checked_entry(self, session_id: str, tool_id: str, names: Sequence[str]) -> tuple[RoutingSession, ResolvedTool]:
        stored = self.session(session_id)
        profile_id = stored.profile_id if stored else DEFAULT_PROFILE_ID
        try:
            session = self._live_session(session_id)
        except RouterError as exc:
            raise self._deny(stored, profile_id, tool_id, names, exc) from None
        entry = session.entry(tool_id)
        if entry is None:
            exc = RouterError("NOT_IN_SESSION", f"{tool_id!r} is not part of session {session_id}")
            raise self._deny(session, profile_id, tool_id, names, exc)
        return session, entry

    def describe_tool(self, session_id: str, tool_id: str) -> str:
        session, entry = self._checked_entry(session_id, tool_id, ())
        schema = render_full_schema(self.catalog.capsule(tool_id, entry.version))
        self._record("describe", session.profile_id, session_id=session_id, tool_id=tool_id)
        return schema

    def gate_call(
        self,
        session_id: str,
        tool_id: str,
        arguments: Mapping[str, Any],
        executor: Executor,
    ) -> CallOutcome:
        """Check session membership, lifecycle and credential mappings, then execute."""
        names = tuple(sorted(arguments))
        session, entry = self._checked_entry(session_id, tool_id, names)
        profile = self.profile(session.profile_id)
        capsule = self.catalog.capsule(tool_id, entry.version)
        if capsule.governance.lifecycle not in profile.allowed_lifecycles:
            exc = RouterError("LIFECYCLE_CHANGED", f"{tool_id!r} is now {capsule.governance.lifecycle}")
            raise self._deny(session, profile.profile_id, tool_id, names, exc)
        mappings = capsule.governance.credential_mappings
        unmapped = [
            a for a in capsule.contract.credential_aliases
            if a not in mappings or mappings[a] not in profile.credential_scope
        ]
        if unmapped:
            exc = RouterError("MISSING_CREDENTIAL_MAPPING", f"no usable mapping for {unmapped}", aliases=unmapped)
            raise self._deny(session, profile.profile_id, tool_id, names, exc)
        try:
            status, output = executor(tool_id, entry.version, dict(arguments))
        except Exception as exc:
            self._record(
                "call", profile.profile_id, outcome="error", session_id=session_id,
                tool_id=tool_id, argument_names=names, error_code="EXECUTOR_FAILURE",
            )
            raise RouterError("EXECUTOR_FAILURE", f"{type(exc).__name__}: {exc}") from exc
        self._record(
            "call",
            profile.profile_id,
            outcome="ok" if status == 0 else "error",
            session_id=session_id,
            tool_id=tool_id,
            argument_names=names,
            error_code=None if status == 0 else "TOOL_EXIT_NONZERO",
        )
        return CallOutcome(tool_id, entry.version, status, output)

    def apply_governance_action(self, tool_id: str, action: str, actor: str, **params: Any):
        """Apply a lifecycle action, pin/unpin, or credential (un)mapping.

        ``pin`` takes ``version``; ``map_credential`` takes ``alias`` and
        ``secret_ref``; ``unmap_credential`` takes ``alias``.
        """
        with self._lock:
            try:
                capsule = self.catalog.capsule(tool_id)
            except CatalogError:
                raise RouterError("UNKNOWN_TOOL", f"no tool {tool_id!r}") from None
            gov = capsule.governance
            try:
                if action in LIFECYCLE_ACTIONS:
                    gov = replace(gov, lifecycle=transition_lifecycle(gov.lifecycle, action))
                    self.catalog.update_governance(tool_id, gov)
                elif action == "pin":
                    self.catalog.set_pin(tool_id, int(params["version"]))
                elif action == "unpin":
                    self.catalog.set_pin(tool_id, None)
                elif action == "map_credential":
                    mappings = {**gov.credential_mappings, params["alias"]: params["secret_ref"]}
                    self.catalog.update_governance(tool_id, replace(gov, credential_mappings=mappings))
                elif action == "unmap_credential":
                    mappings = {k: v for k, v in gov.credential_mappings.items() if k != params["alias"]}
                    self.catalog.update_governance(tool_id, replace(gov, credential_mappings=mappings))
                else:
                    raise RouterError("UNKNOWN_ACTION", f"unknown governance action {action!r}")
            except CapsuleError as exc:
                raise RouterError(exc.code, exc.message) from exc
            except CatalogError as exc:
                raise RouterError(exc.code, exc.message) from exc
            except KeyError as exc:
                raise RouterError("INVALID_PARAMS", f"{action} needs {exc}") from exc
            self._record(
                "governance_change",
                DEFAULT_PROFILE_ID,
                tool_id=tool_id,
                argument_names=tuple(sorted(params)),
                actor=actor,
                action=action,
            )
            return self.catalog.capsule(tool_id).governance

    def query_audit(self, **filters: Any) -> list[AuditRecord]:
        return self.audit.query(**filters)


def _dump(obj: Any) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def load_profiles(root: str | Path) -> dict[str, GovernanceProfile]:
    out = {}
    pdir = Path(root) / "profiles"
    if pdir.is_dir():
        for path in sorted(pdir.glob("*.json")):
            profile = GovernanceProfile.from_dict(json.loads(path.read_text(encoding="utf-8")))
            out[profile.profile_id] = profile
    return out


# Module-level forms of the router operations.


def filter_candidates(router: Router, profile: GovernanceProfile | str) -> list[CatalogCard]:
    return router.filter_candidates(profile)


def resolve_session(router: Router, profile_id: str, query: str, k_override: int | None = None) -> RoutingSession:
    return router.resolve_session(query, profile_id, k_override)
