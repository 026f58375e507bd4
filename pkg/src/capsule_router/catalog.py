"""File-backed capsule store, catalog cards and token accounting.

Store layout under a catalog root::

    index.json                          tool_id -> versions, pinned version
    tools/<tool_id>/card.json           card for the active version
    tools/<tool_id>/<version>/capsule.json
    tools/<tool_id>/<version>/<artifact files>

A catalog opened with ``root=None`` lives in memory only; the bench harness
uses that mode for large synthetic catalogs.
"""

from __future__ import annotations

import json
import logging
import os
import re
import shutil
import threading
import uuid
from dataclasses import asdict, dataclass, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from .capsule import (
    PARAM_KINDS,
    CapabilityContract,
    GovernanceState,
    ParameterSpec,
    Provenance,
    ToolCapsule,
    ValidationEvidence,
    assemble_capsule,
    capsule_from_dict,
    capsule_to_json,
    content_hash,
    readme_text,
    summarize,
    tool_card_text,
)
from .errors import CapsuleError, CatalogError

logger = logging.getLogger(__name__)

READ_VERBS = ("get", "list", "read", "search", "fetch", "download")
WRITE_VERBS = ("create", "update", "delete", "upload", "send", "post", "move")
_VERB_SUFFIXES = ("", "s", "es", "d", "ed", "ing", "ting")


def estimate_tokens(text: str) -> int:
    """ceil(characters / 4), counting code points."""
    return -(-len(text) // 4)


def render_contract_schema(contract: CapabilityContract) -> str:
    lines = [f"tool: {contract.name}", f"description: {contract.description}"]
    if contract.tags:
        lines.append("tags: " + ", ".join(contract.tags))
    lines.append("parameters:")
    for p in contract.parameters:
        req = "required" if p.required else "optional"
        line = f"  - {p.name} ({p.kind}, {req}): {p.description}"
        if p.enum_values:
            line += " [choices: " + "|".join(p.enum_values) + "]"
        if p.default is not None:
            line += f" [default: {json.dumps(p.default)}]"
        lines.append(line)
    if not contract.parameters:
        lines.append("  (none)")
    lines.append("outputs:")
    for o in contract.outputs:
        lines.append(f"  - {o.name} ({o.kind}): {o.description}")
    if not contract.outputs:
        lines.append("  (none)")
    creds = ", ".join(contract.credential_aliases) or "none"
    lines.append(f"credentials: {creds}")
    lines.append(f"runtime_class: {contract.runtime_class}")
    return "\n".join(lines) + "\n"


def render_full_schema(capsule: ToolCapsule) -> str:
    """Canonical full schema text; its size defines ``schema_tokens``."""
    return render_contract_schema(capsule.contract)


def _words(text: str) -> list[str]:
    return [w for w in re.split(r"[^a-z0-9]+", text.lower()) if w]


def _verb_forms(verb: str) -> set[str]:
    forms = {verb + s for s in _VERB_SUFFIXES}
    if verb.endswith("e"):
        forms.add(verb[:-1] + "ing")
    return forms


_READ_FORMS = set().union(*(_verb_forms(v) for v in READ_VERBS))
_WRITE_FORMS = set().union(*(_verb_forms(v) for v in WRITE_VERBS))


def classify_rw(name: str, description: str) -> str:
    words = set(_words(name)) | set(_words(description))
    reads = bool(words & _READ_FORMS)
    writes = bool(words & _WRITE_FORMS)
    if reads and writes:
        return "read_write"
    if reads:
        return "read"
    if writes:
        return "write"
    return "unknown"


@dataclass(frozen=True)
class CatalogCard:
    tool_id: str
    version: int
    name: str
    summary: str
    tags: tuple[str, ...]
    param_names: tuple[str, ...]
    rw_class: str
    lifecycle: str
    card_tokens: int
    schema_tokens: int

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["tags"] = list(self.tags)
        d["param_names"] = list(self.param_names)
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "CatalogCard":
        return cls(**{**d, "tags": tuple(d["tags"]), "param_names": tuple(d["param_names"])})

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def card_text(name: str, rw_class: str, summary: str, tags: Sequence[str], param_names: Sequence[str]) -> str:
    lines = [f"{name} [{rw_class}]: {summary}"]
    if tags:
        lines.append("tags: " + ", ".join(tags))
    if param_names:
        lines.append("params: " + ", ".join(param_names))
    return "\n".join(lines) + "\n"


def derive_card(capsule: ToolCapsule) -> CatalogCard:
    c = capsule.contract
    summary = summarize(c.description)
    rw = classify_rw(c.name, c.description)
    params = tuple(p.name for p in c.parameters)
    return CatalogCard(
        tool_id=capsule.tool_id,
        version=capsule.version,
        name=c.name,
        summary=summary,
        tags=tuple(c.tags),
        param_names=params,
        rw_class=rw,
        lifecycle=capsule.governance.lifecycle,
        card_tokens=estimate_tokens(card_text(c.name, rw, summary, c.tags, params)),
        schema_tokens=estimate_tokens(render_full_schema(capsule)),
    )


def _dump(obj: Any) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.{uuid.uuid4().hex}.tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)


class Catalog:
    """Set of capsule versions plus one card per tool (latest or pinned).

    Mutations are serialized by an internal lock; readers should treat the
    returned cards and capsules as immutable snapshots.
    """

    def __init__(self, root: str | Path | None = None) -> None:
        self.root = Path(root) if root is not None else None
        self._capsules: dict[str, dict[int, ToolCapsule]] = {}
        self._pins: dict[str, int] = {}
        self._cards: dict[str, CatalogCard] = {}
        self.quarantined: dict[str, CatalogError] = {}
        self._lock = threading.RLock()

    # -- read side ---------------------------------------------------------

    @property
    def entries(self) -> dict[str, list[int]]:
        return {t: sorted(v) for t, v in sorted(self._capsules.items())}

    @property
    def cards(self) -> list[CatalogCard]:
        return [self._cards[t] for t in sorted(self._cards)]

    def __len__(self) -> int:
        return len(self._cards)

    def __contains__(self, tool_id: object) -> bool:
        return tool_id in self._capsules

    def card(self, tool_id: str) -> CatalogCard:
        try:
            return self._cards[tool_id]
        except KeyError:
            raise CatalogError("UNKNOWN_TOOL", f"no tool {tool_id!r}") from None

    def pinned(self, tool_id: str) -> int | None:
        return self._pins.get(tool_id)

    def active_version(self, tool_id: str) -> int:
        if tool_id not in self._capsules:
            raise CatalogError("UNKNOWN_TOOL", f"no tool {tool_id!r}")
        return self._pins.get(tool_id) or max(self._capsules[tool_id])

    def capsule(self, tool_id: str, version: int | None = None) -> ToolCapsule:
        versions = self._capsules.get(tool_id)
        if not versions:
            raise CatalogError("UNKNOWN_TOOL", f"no tool {tool_id!r}")
        v = self.active_version(tool_id) if version is None else version
        if v not in versions:
            raise CatalogError("UNKNOWN_VERSION", f"{tool_id!r} has no version {v}")
        cap = versions[v]
        pin = self._pins.get(tool_id)
        if cap.governance.pinned_version != pin:
            cap = replace(cap, governance=replace(cap.governance, pinned_version=pin))
        return cap

    def capsules(self) -> list[ToolCapsule]:
        return [self.capsule(t) for t in sorted(self._capsules)]

    def version_dir(self, tool_id: str, version: int) -> Path:
        if self.root is None:
            raise CatalogError("STORE_IO_FAILURE", "in-memory catalog has no directories")
        return self.root / "tools" / tool_id / str(version)

    def read_artifact(self, tool_id: str, role: str, version: int | None = None) -> str:
        cap = self.capsule(tool_id, version)
        if role in cap.contents:
            return cap.contents[role]
        ref = cap.artifact_refs().get(role)
        if ref is None:
            raise CatalogError("UNKNOWN_ARTIFACT", f"{tool_id!r} has no {role} artifact")
        return (self.version_dir(tool_id, cap.version) / ref.path).read_text(encoding="utf-8")

    # -- write side --------------------------------------------------------

    def register(self, capsule: ToolCapsule) -> tuple[str, int]:
        tool_id, version = capsule.tool_id, capsule.version
        with self._lock:
            latest = max(self._capsules.get(tool_id, {0: None}))
            if version != latest + 1:
                raise CatalogError(
                    "VERSION_CONFLICT", f"{tool_id!r} expects version {latest + 1}, got {version}", tool_id=tool_id
                )
            if self.root is not None:
                self._write_version(capsule)
            self._capsules.setdefault(tool_id, {})[version] = capsule
            self._refresh(tool_id)
        return tool_id, version

    def update_governance(self, tool_id: str, governance: GovernanceState, version: int | None = None) -> ToolCapsule:
        """Replace the governance state of one version (default: active) and persist it."""
        with self._lock:
            cap = self.capsule(tool_id, version)
            updated = replace(cap, governance=replace(governance, pinned_version=self._pins.get(tool_id)))
            if self.root is not None:
                try:
                    _atomic_write(self.version_dir(tool_id, cap.version) / "capsule.json", capsule_to_json(updated))
                except OSError as exc:
                    raise CatalogError("STORE_IO_FAILURE", str(exc)) from exc
            self._capsules[tool_id][cap.version] = replace(updated, contents=cap.contents)
            self._refresh(tool_id)
            return self.capsule(tool_id, cap.version)

    def set_pin(self, tool_id: str, version: int | None) -> None:
        with self._lock:
            if tool_id not in self._capsules:
                raise CatalogError("UNKNOWN_TOOL", f"no tool {tool_id!r}")
            if version is not None and version not in self._capsules[tool_id]:
                raise CatalogError("UNKNOWN_VERSION", f"{tool_id!r} has no version {version}")
            if version is None:
                self._pins.pop(tool_id, None)
            else:
                self._pins[tool_id] = version
            self._refresh(tool_id)

    def _refresh(self, tool_id: str) -> None:
        card = derive_card(self.capsule(tool_id))
        self._cards[tool_id] = card
        if self.root is not None:
            try:
                _atomic_write(self.root / "tools" / tool_id / "card.json", card.to_json())
                self._write_index()
            except OSError as exc:
                raise CatalogError("STORE_IO_FAILURE", str(exc)) from exc

    def _write_index(self) -> None:
        assert self.root is not None
        index = {
            "tools": {
                t: {"versions": sorted(v), "pinned": self._pins.get(t)} for t, v in sorted(self._capsules.items())
            }
        }
        _atomic_write(self.root / "index.json", _dump(index))

    def _write_version(self, capsule: ToolCapsule) -> None:
        assert self.root is not None
        tool_dir = self.root / "tools" / capsule.tool_id
        final = tool_dir / str(capsule.version)
        tmp = tool_dir / f".staging-{capsule.version}-{uuid.uuid4().hex}"
        try:
            tmp.mkdir(parents=True)
            for role, ref in capsule.artifact_refs().items():
                text = capsule.contents.get(role)
                if text is None:
                    raise CatalogError("STORE_IO_FAILURE", f"capsule carries no content for {role}")
                if content_hash(text) != ref.sha256:
                    raise CatalogError("STORE_IO_FAILURE", f"{role} content does not match its hash")
                with open(tmp / ref.path, "w", encoding="utf-8", newline="\n") as fh:
                    fh.write(text)
            with open(tmp / "capsule.json", "w", encoding="utf-8", newline="\n") as fh:
                fh.write(capsule_to_json(capsule))
            if final.exists():
                raise CatalogError("VERSION_CONFLICT", f"{final} already exists on disk")
            os.rename(tmp, final)
        except OSError as exc:
            raise CatalogError("STORE_IO_FAILURE", str(exc)) from exc
        finally:
            if tmp.exists():
                shutil.rmtree(tmp, ignore_errors=True)

    # -- loading -----------------------------------------------------------

    def _load(self) -> None:
        assert self.root is not None
        self.root.mkdir(parents=True, exist_ok=True)
        pins: dict[str, int] = {}
        index_path = self.root / "index.json"
        if index_path.exists():
            index = json.loads(index_path.read_text(encoding="utf-8"))
            pins = {t: e["pinned"] for t, e in index.get("tools", {}).items() if e.get("pinned")}
        tools_dir = self.root / "tools"
        if not tools_dir.is_dir():
            return
        for tool_dir in sorted(p for p in tools_dir.iterdir() if p.is_dir() and not p.name.startswith(".")):
            tool_id = tool_dir.name
            try:
                versions = self._load_tool(tool_dir)
            except CatalogError as exc:
                logger.warning("quarantined %s: %s", tool_id, exc)
                self.quarantined[tool_id] = exc
                continue
            if not versions:
                continue
            self._capsules[tool_id] = versions
            if tool_id in pins and pins[tool_id] in versions:
                self._pins[tool_id] = pins[tool_id]
            self._cards[tool_id] = derive_card(self.capsule(tool_id))

    def _load_tool(self, tool_dir: Path) -> dict[int, ToolCapsule]:
        versions: dict[int, ToolCapsule] = {}
        for vdir in tool_dir.iterdir():
            if not (vdir.is_dir() and vdir.name.isdigit()):
                continue
            try:
                cap = capsule_from_dict(json.loads((vdir / "capsule.json").read_text(encoding="utf-8")))
            except (OSError, ValueError, KeyError, TypeError) as exc:
                raise CatalogError("CORRUPT_CAPSULE", f"{vdir}: unreadable capsule.json ({exc})") from exc
            if cap.tool_id != tool_dir.name or cap.version != int(vdir.name):
                raise CatalogError("CORRUPT_CAPSULE", f"{vdir}: provenance does not match location")
            for role, ref in cap.artifact_refs().items():
                try:
                    actual = content_hash((vdir / ref.path).read_text(encoding="utf-8"))
                except (OSError, UnicodeDecodeError) as exc:
                    raise CatalogError("CORRUPT_CAPSULE", f"{vdir}: missing {role} artifact") from exc
                if actual != ref.sha256:
                    raise CatalogError("CORRUPT_CAPSULE", f"{vdir}: {role} hash mismatch", role=role)
            versions[cap.version] = cap
        if versions and sorted(versions) != list(range(1, max(versions) + 1)):
            raise CatalogError("CORRUPT_CAPSULE", f"{tool_dir}: version sequence has gaps")
        return versions


def open_catalog(root: str | Path | None) -> Catalog:
    """Scan a store, verify artifact hashes and rebuild the card index.

    Tools whose artifacts fail verification land in ``catalog.quarantined``
    instead of aborting the load.
    """
    catalog = Catalog(root)
    if catalog.root is not None:
        catalog._load()
    return catalog


def register_capsule(catalog: Catalog, capsule: ToolCapsule) -> tuple[str, int]:
    return catalog.register(capsule)


# ---------------------------------------------------------------------------
# MCP listing import
# ---------------------------------------------------------------------------


def snake_identifier(text: str) -> str:
    s = re.sub(r"([a-z0-9])([A-Z])", r"\1_\2", text)
    s = re.sub(r"[^A-Za-z0-9]+", "_", s).strip("_").lower()
    if not s:
        return ""
    return s if s[0].isalpha() else f"t_{s}"


def _descriptor_contract(desc: Any) -> tuple[CapabilityContract, str, str]:
    if not isinstance(desc, Mapping):
        raise CatalogError("MALFORMED_DESCRIPTOR", "descriptor is not an object")
    name, description = desc.get("name"), desc.get("description")
    if not isinstance(name, str) or not snake_identifier(name):
        raise CatalogError("MALFORMED_DESCRIPTOR", "descriptor lacks a usable name", descriptor=desc)
    if not isinstance(description, str):
        raise CatalogError("MALFORMED_DESCRIPTOR", f"{name!r} lacks a description")
    server = desc.get("server")
    if not isinstance(server, str) or not server:
        raise CatalogError("MALFORMED_DESCRIPTOR", f"{name!r} lacks a server identifier")
    raw_params = desc.get("parameters", [])
    if not isinstance(raw_params, list):
        raise CatalogError("MALFORMED_DESCRIPTOR", f"{name!r} parameters must be a list")
    params = []
    for p in raw_params:
        if not isinstance(p, Mapping) or not isinstance(p.get("name"), str) or p.get("kind") not in PARAM_KINDS:
            raise CatalogError("MALFORMED_DESCRIPTOR", f"{name!r} has a parameter without a valid name/kind")
        enum_values = p.get("enum_values")
        params.append(
            ParameterSpec(
                name=snake_identifier(p["name"]),
                kind=p["kind"],
                required=bool(p.get("required", False)),
                description=p.get("description", ""),
                enum_values=tuple(enum_values) if enum_values else None,
            )
        )
    contract = CapabilityContract(
        name=snake_identifier(name),
        description=description,
        parameters=tuple(params),
        runtime_class="network_api",
        tags=tuple(snake_identifier(t) for t in desc.get("tags", ()) if snake_identifier(t)),
    )
    return contract, server, snake_identifier(f"{server}_{name}")


def import_mcp_listing(
    catalog: Catalog,
    listing: Iterable[Mapping[str, Any]],
    created_at: datetime | None = None,
) -> list[str]:
    """Register each external tool descriptor as a pending-review capsule.

    The batch is checked up front: a malformed or duplicate descriptor
    rejects the whole listing before anything is written.
    """
    created_at = created_at or datetime.now(timezone.utc)
    parsed = [_descriptor_contract(d) for d in listing]

    existing = {(c.provenance.origin, c.contract.name) for c in catalog.capsules() if c.provenance.source == "imported_mcp"}
    dups = sorted(
        {f"{server}/{contract.name}" for contract, server, tool_id in parsed
         if (server, contract.name) in existing or tool_id in catalog}
    )
    seen: set[str] = set()
    for _, _, tool_id in parsed:
        if tool_id in seen:
            dups.append(tool_id)
        seen.add(tool_id)
    if dups:
        raise CatalogError("DUPLICATE_IMPORT", f"already imported: {', '.join(dups)}", duplicates=dups)

    ids = []
    for contract, server, tool_id in parsed:
        files = {"readme": readme_text(contract), "tool_card": tool_card_text(contract)}
        try:
            capsule = assemble_capsule(
                contract,
                files,
                (),
                ValidationEvidence(),
                Provenance(tool_id, 1, "imported_mcp", server, created_at),
            )
        except CapsuleError as exc:
            raise CatalogError("MALFORMED_DESCRIPTOR", str(exc)) from exc
        catalog.register(capsule)
        ids.append(tool_id)
    return ids


def load_listing(path: str | Path) -> list[dict[str, Any]]:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(data, list):
        raise CatalogError("MALFORMED_DESCRIPTOR", "listing must be a JSON array")
    return data
