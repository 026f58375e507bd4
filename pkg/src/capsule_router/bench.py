"""Router benchmark harness: synthetic catalogs, suites, metrics, reports.

Synthetic catalogs are built from tool families that share vocabulary on
purpose (storage upload/download/delete, messaging send/read, issues vs
pull requests) so that lexical routing meets realistic confusion.  Schema
sizes are calibrated to a target mean so token-exposure rows land at a
chosen mass.
"""

from __future__ import annotations

import csv
import io
import json
import random
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from fractions import Fraction
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from .capsule import (
    CapabilityContract,
    CredentialRequirement,
    FailureMode,
    OutputField,
    ParameterSpec,
    Provenance,
    ToolCapsule,
    ValidationEvidence,
    assemble_capsule,
    normalize_dependencies,
    scaffold_bundle,
)
from .catalog import Catalog, render_contract_schema
from .errors import BenchError
from .mcp_surface import meta_surface_tokens
from .metrics import prf_exact
from .router import GovernanceProfile, Router, RoutingSession

DEFAULT_SCHEMA_CHARS = 1430
SYNTHETIC_EPOCH = datetime(2026, 1, 1, tzinfo=timezone.utc)
TIERS = ("lite", "realistic", "adversarial")

# ---------------------------------------------------------------------------
# tool families
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Operation:
    verb: str
    obj: str
    sentence: str  # "{where}" is replaced by the provider phrase
    params: tuple[tuple[str, str, bool, str], ...]
    outputs: tuple[tuple[str, str, str], ...]


@dataclass(frozen=True)
class Family:
    name: str
    tags: tuple[str, ...]
    runtime_class: str
    noun: str
    dependencies: tuple[str, ...]
    operations: tuple[Operation, ...]


def _op(verb: str, obj: str, sentence: str, params: Sequence[tuple], outputs: Sequence[tuple]) -> Operation:
    return Operation(verb, obj, sentence, tuple(params), tuple(outputs))


_P = ("path", "path", True)
FAMILIES: dict[str, Family] = {
    f.name: f
    for f in (
        Family("storage", ("storage", "files"), "network_api", "object storage", ("requests==2.31.0",), (
            _op("upload", "file", "Uploads a local file to {where}object storage under a destination key.",
                [("file_path", "path", True, "Local path of the file to upload."),
                 ("bucket", "string", True, "Bucket or container that receives the object."),
                 ("destination_key", "string", False, "Object key to write; defaults to the file name.")],
                [("object_url", "string", "Location of the stored object."), ("size_bytes", "integer", "Bytes stored.")]),
            _op("download", "file", "Downloads an object from {where}object storage into a local file.",
                [("bucket", "string", True, "Bucket or container holding the object."),
                 ("object_key", "string", True, "Key of the object to download."),
                 ("output_path", "path", True, "Local destination path.")],
                [("output_path", "path", "Path written on disk."), ("size_bytes", "integer", "Bytes received.")]),
            _op("delete", "file", "Deletes an object from {where}object storage permanently.",
                [("bucket", "string", True, "Bucket or container holding the object."),
                 ("object_key", "string", True, "Key of the object to remove.")],
                [("deleted", "boolean", "True when the object no longer exists.")]),
            _op("list", "files", "Lists objects stored in a {where}object storage bucket with optional prefix filtering.",
                [("bucket", "string", True, "Bucket or container to enumerate."),
                 ("prefix", "string", False, "Only keys beginning with this prefix are returned.")],
                [("keys", "string", "Newline separated object keys.")]),
            _op("move", "file", "Moves an object between keys or buckets in {where}object storage.",
                [("bucket", "string", True, "Source bucket."), ("object_key", "string", True, "Source key."),
                 ("target_key", "string", True, "Destination key.")],
                [("object_url", "string", "Location after the move.")]),
        )),
        Family("messaging", ("messaging", "chat"), "network_api", "team chat", ("requests==2.31.0",), (
            _op("send", "message", "Sends a text message to a {where}team chat channel.",
                [("channel", "string", True, "Channel name or identifier."),
                 ("text", "string", True, "Plain text body of the message.")],
                [("message_id", "string", "Identifier of the posted message.")]),
            _op("read", "messages", "Reads recent messages from a {where}team chat channel.",
                [("channel", "string", True, "Channel name or identifier."),
                 ("limit", "integer", False, "Maximum number of messages to return.")],
                [("messages", "string", "Messages as JSON lines.")]),
            _op("list", "channels", "Lists channels visible to the {where}team chat bot account.",
                [("include_archived", "boolean", False, "Include archived channels.")],
                [("channels", "string", "Channel names.")]),
            _op("delete", "message", "Deletes a previously posted {where}team chat message.",
                [("channel", "string", True, "Channel name or identifier."),
                 ("message_id", "string", True, "Identifier of the message to remove.")],
                [("deleted", "boolean", "True when the message was removed.")]),
            _op("upload", "attachment", "Uploads a file attachment into a {where}team chat channel.",
                [("channel", "string", True, "Channel name or identifier."),
                 ("file_path", "path", True, "Local path of the attachment.")],
                [("file_id", "string", "Identifier of the shared file.")]),
        )),
        Family("vcs", ("vcs", "code"), "network_api", "code hosting", ("requests==2.31.0",), (
            _op("create", "issue", "Creates an issue in a {where}code hosting repository.",
                [("repository", "string", True, "Repository in owner/name form."),
                 ("title", "string", True, "Issue title."), ("body", "string", False, "Issue body in markdown.")],
                [("issue_number", "integer", "Number of the new issue.")]),
            _op("list", "issues", "Lists open issues of a {where}code hosting repository.",
                [("repository", "string", True, "Repository in owner/name form."),
                 ("label", "string", False, "Only issues carrying this label.")],
                [("issues", "string", "Issue numbers and titles.")]),
            _op("create", "pull_request", "Opens a pull request between two branches of a {where}code hosting repository.",
                [("repository", "string", True, "Repository in owner/name form."),
                 ("head_branch", "string", True, "Branch with the changes."),
                 ("base_branch", "string", True, "Branch to merge into."),
                 ("title", "string", True, "Pull request title.")],
                [("pull_number", "integer", "Number of the new pull request.")]),
            _op("merge", "pull_request", "Merges an approved pull request in a {where}code hosting repository.",
                [("repository", "string", True, "Repository in owner/name form."),
                 ("pull_number", "integer", True, "Pull request number.")],
                [("merged", "boolean", "True when the merge succeeded.")]),
            _op("close", "issue", "Closes an issue in a {where}code hosting repository with an optional comment.",
                [("repository", "string", True, "Repository in owner/name form."),
                 ("issue_number", "integer", True, "Issue number."),
                 ("comment", "string", False, "Closing comment.")],
                [("closed", "boolean", "True when the issue is closed.")]),
        )),
        Family("documents", ("documents", "pdf"), "filesystem", "document toolkit", ("pypdf==4.2.0",), (
            _op("convert", "pdf", "Converts a markdown or HTML document into PDF with the {where}document toolkit.",
                [("input_path", "path", True, "Source document."), ("output_path", "path", True, "PDF to write.")],
                [("pages", "integer", "Pages in the produced PDF.")]),
            _op("merge", "pdf", "Combines several PDF files into one with the {where}document toolkit.",
                [("input_paths", "string", True, "Comma separated PDF paths."),
                 ("output_path", "path", True, "Combined PDF to write.")],
                [("pages", "integer", "Pages in the combined PDF.")]),
            _op("extract", "text", "Extracts plain text from a PDF using the {where}document toolkit.",
                [("input_path", "path", True, "PDF to read."),
                 ("page_range", "string", False, "Pages to include, for example 1-3.")],
                [("text", "string", "Extracted text.")]),
            _op("compress", "pdf", "Shrinks PDF size by recompressing images with the {where}document toolkit.",
                [("input_path", "path", True, "PDF to compress."), ("output_path", "path", True, "Output PDF."),
                 ("quality", "enum", False, "Target quality level.")],
                [("size_bytes", "integer", "Size of the output.")]),
        )),
        Family("email", ("email", "mail"), "network_api", "mail service", ("requests==2.31.0",), (
            _op("send", "email", "Sends an email through the {where}mail service.",
                [("to", "string", True, "Recipient addresses."), ("subject", "string", True, "Subject line."),
                 ("body", "string", True, "Plain text body.")],
                [("message_id", "string", "Provider message identifier.")]),
            _op("search", "inbox", "Searches the {where}mail service inbox by sender or subject.",
                [("query", "string", True, "Search expression."), ("limit", "integer", False, "Maximum results.")],
                [("messages", "string", "Matching message summaries.")]),
            _op("read", "email", "Reads one email including headers from the {where}mail service.",
                [("message_id", "string", True, "Identifier of the email.")],
                [("body", "string", "Message body.")]),
            _op("delete", "email", "Deletes an email from the {where}mail service mailbox.",
                [("message_id", "string", True, "Identifier of the email.")],
                [("deleted", "boolean", "True when removed.")]),
        )),
        Family("calendar", ("calendar", "scheduling"), "network_api", "calendar", ("requests==2.31.0",), (
            _op("create", "event", "Creates a meeting on the {where}calendar with attendees.",
                [("title", "string", True, "Event title."), ("start_time", "string", True, "ISO start time."),
                 ("duration_minutes", "integer", True, "Length in minutes."),
                 ("attendees", "string", False, "Comma separated attendee emails.")],
                [("event_id", "string", "Identifier of the created event.")]),
            _op("list", "events", "Lists upcoming events on the {where}calendar for a date range.",
                [("start_date", "string", True, "First day."), ("end_date", "string", True, "Last day.")],
                [("events", "string", "Events as JSON lines.")]),
            _op("update", "event", "Reschedules or renames an existing {where}calendar event.",
                [("event_id", "string", True, "Event to change."), ("start_time", "string", False, "New start.")],
                [("event_id", "string", "Identifier of the changed event.")]),
            _op("delete", "event", "Cancels an event on the {where}calendar and notifies attendees.",
                [("event_id", "string", True, "Event to cancel.")],
                [("deleted", "boolean", "True when cancelled.")]),
        )),
        Family("crm", ("crm", "sales"), "network_api", "customer records", ("requests==2.31.0",), (
            _op("create", "contact", "Creates a contact record in the {where}customer records system.",
                [("email", "string", True, "Contact email."), ("full_name", "string", True, "Contact name."),
                 ("company", "string", False, "Employer.")],
                [("contact_id", "string", "Identifier of the contact.")]),
            _op("update", "contact", "Updates fields on a contact in the {where}customer records system.",
                [("contact_id", "string", True, "Contact to change."), ("fields_json", "string", True, "Fields as JSON.")],
                [("contact_id", "string", "Identifier of the contact.")]),
            _op("search", "contacts", "Searches contacts in the {where}customer records system by name or company.",
                [("query", "string", True, "Search expression.")],
                [("contacts", "string", "Matching contacts.")]),
            _op("get", "deal", "Gets pipeline stage and amount of a deal from the {where}customer records system.",
                [("deal_id", "string", True, "Deal identifier.")],
                [("stage", "string", "Pipeline stage."), ("amount", "number", "Deal amount.")]),
        )),
        Family("payments", ("payments", "billing"), "network_api", "payment gateway", ("requests==2.31.0",), (
            _op("create", "charge", "Creates a card charge through the {where}payment gateway.",
                [("amount", "number", True, "Amount in major units."), ("currency", "string", True, "ISO currency."),
                 ("customer_id", "string", True, "Customer to charge.")],
                [("charge_id", "string", "Identifier of the charge.")]),
            _op("refund", "payment", "Refunds a captured payment fully or partially via the {where}payment gateway.",
                [("charge_id", "string", True, "Charge to refund."), ("amount", "number", False, "Partial amount.")],
                [("refund_id", "string", "Identifier of the refund.")]),
            _op("list", "invoices", "Lists invoices for a customer from the {where}payment gateway.",
                [("customer_id", "string", True, "Customer identifier."), ("status", "enum", False, "Invoice status.")],
                [("invoices", "string", "Invoice identifiers and totals.")]),
            _op("get", "balance", "Gets the available account balance from the {where}payment gateway.",
                [("currency", "string", False, "Restrict to one currency.")],
                [("available", "number", "Available funds.")]),
        )),
        Family("data", ("data", "csv"), "pure_local", "tabular toolkit", ("pandas==2.2.2",), (
            _op("pivot", "csv", "Pivots a CSV file into a summary table with the {where}tabular toolkit.",
                [("input_path", "path", True, "CSV to read."), ("index_column", "string", True, "Row grouping column."),
                 ("value_column", "string", True, "Column to aggregate."), ("delimiter", "string", False, "Field separator.")],
                [("output_csv", "string", "Pivoted table as CSV.")]),
            _op("filter", "rows", "Filters CSV rows matching a column condition with the {where}tabular toolkit.",
                [("input_path", "path", True, "CSV to read."), ("column", "string", True, "Column to test."),
                 ("equals", "string", True, "Value to keep.")],
                [("row_count", "integer", "Rows kept.")]),
            _op("join", "tables", "Joins two CSV tables on a shared key with the {where}tabular toolkit.",
                [("left_path", "path", True, "Left CSV."), ("right_path", "path", True, "Right CSV."),
                 ("key", "string", True, "Join column.")],
                [("row_count", "integer", "Rows in the joined table.")]),
            _op("dedupe", "records", "Removes duplicate records from a CSV with the {where}tabular toolkit.",
                [("input_path", "path", True, "CSV to read."), ("columns", "string", False, "Columns defining a duplicate.")],
                [("removed", "integer", "Duplicates removed.")]),
            _op("validate", "yaml", "Parses YAML safely and validates required keys with the {where}tabular toolkit.",
                [("input_path", "path", True, "YAML file."), ("required_keys", "string", False, "Comma separated keys.")],
                [("valid", "boolean", "True when the document is valid.")]),
        )),
        Family("ci", ("ci", "builds"), "network_api", "build pipeline", ("requests==2.31.0",), (
            _op("trigger", "build", "Triggers a new run of a {where}build pipeline for a branch.",
                [("pipeline", "string", True, "Pipeline name."), ("branch", "string", True, "Branch to build.")],
                [("run_id", "string", "Identifier of the run.")]),
            _op("get", "build_status", "Gets the status and duration of a {where}build pipeline run.",
                [("run_id", "string", True, "Run identifier.")],
                [("status", "string", "Run status.")]),
            _op("cancel", "build", "Cancels a running {where}build pipeline job.",
                [("run_id", "string", True, "Run identifier.")],
                [("cancelled", "boolean", "True when cancelled.")]),
            _op("list", "pipelines", "Lists pipelines configured in the {where}build pipeline service.",
                [("project", "string", False, "Restrict to one project.")],
                [("pipelines", "string", "Pipeline names.")]),
        )),
        Family("database", ("database", "sql"), "network_api", "database", ("sqlalchemy==2.0.30",), (
            _op("run", "query", "Runs a read-only SQL query against the {where}database.",
                [("sql", "string", True, "SQL text."), ("max_rows", "integer", False, "Row cap.")],
                [("rows", "string", "Result rows as JSON lines.")]),
            _op("list", "tables", "Lists tables and row counts in the {where}database.",
                [("schema_name", "string", False, "Schema to inspect.")],
                [("tables", "string", "Table names.")]),
            _op("create", "backup", "Creates a snapshot backup of the {where}database.",
                [("label", "string", True, "Backup label.")],
                [("backup_id", "string", "Identifier of the backup.")]),
        )),
        Family("analytics", ("analytics", "metrics"), "network_api", "analytics platform", ("requests==2.31.0",), (
            _op("fetch", "metrics", "Fetches time series metrics from the {where}analytics platform.",
                [("metric", "string", True, "Metric name."), ("window", "string", True, "Time window.")],
                [("points", "string", "Data points.")]),
            _op("create", "dashboard", "Creates a dashboard with charts on the {where}analytics platform.",
                [("title", "string", True, "Dashboard title."), ("metrics", "string", True, "Comma separated metrics.")],
                [("dashboard_url", "string", "Link to the dashboard.")]),
            _op("export", "report", "Exports a scheduled report from the {where}analytics platform as CSV.",
                [("report_id", "string", True, "Report identifier."), ("output_path", "path", True, "CSV to write.")],
                [("row_count", "integer", "Rows exported.")]),
        )),
    )
}

PROVIDERS = (
    "", "acme", "globex", "initech", "umbrella", "hooli", "vandelay", "wonka", "tyrell",
    "cyberdyne", "soylent", "stark", "wayne", "oscorp", "monarch", "aperture", "nakatomi",
)

# Neutral prose used to bring each schema up to its target size.  It avoids
# read/write verbs so padding never changes a card's rw_class.
_FILLER = (
    "Responses are normalized into a stable structure that downstream automation can consume.",
    "Timeouts and transient provider errors are surfaced as structured failures with a retry hint.",
    "All timestamps in results use UTC and ISO formatting.",
    "Large payloads are streamed in chunks to keep memory usage predictable.",
    "Rate limits are respected by honoring provider backoff headers.",
    "The tool is idempotent where the provider allows it, which makes retries safe.",
    "Input validation happens before any remote interaction takes place.",
    "Error messages never include credential material or raw authorization headers.",
    "Optional parameters fall back to conservative defaults documented below.",
    "Pagination is handled internally so callers receive complete result sets.",
    "Unicode text is preserved exactly as supplied by the caller.",
    "This capability is intended for unattended agent workflows as well as manual use.",
)


def resolve_families(family_spec: Any = None) -> list[Family]:
    """Families from None (all defaults), a list of default names, or Family objects."""
    if family_spec is None:
        return list(FAMILIES.values())
    out = []
    for item in family_spec.values() if isinstance(family_spec, Mapping) else family_spec:
        if isinstance(item, Family):
            out.append(item)
        elif item in FAMILIES:
            out.append(FAMILIES[item])
        else:
            raise BenchError("UNKNOWN_FAMILY", f"unknown family {item!r}")
    if not out:
        raise BenchError("UNKNOWN_FAMILY", "family spec selects no families")
    return out


def _pad(text: str, deficit: int, rng: random.Random) -> str:
    if deficit < 12:
        return text
    extra = ""
    while len(extra) < deficit:
        extra += " " + rng.choice(_FILLER)
    extra = extra[:deficit]
    cut = extra.rfind(" ")
    extra = extra[:cut] if cut > 0 else extra
    return text + extra.rstrip(".,") + "."


def _contract(family: Family, op: Operation, provider: str, target: int, rng: random.Random) -> CapabilityContract:
    parts = [provider, family.name, op.verb, op.obj] if provider else [family.name, op.verb, op.obj]
    name = "_".join(parts)
    where = f"{provider.capitalize()} " if provider else ""
    params = []
    for pname, kind, required, desc in op.params:
        enum_values = ("low", "medium", "high") if kind == "enum" and pname == "quality" else None
        if kind == "enum" and enum_values is None:
            enum_values = ("open", "paid", "void")
        params.append(ParameterSpec(pname, kind, required, desc, enum_values))
    credentials: tuple[CredentialRequirement, ...] = ()
    if family.runtime_class == "network_api":
        alias = f"{(provider or family.name).upper()}_API_TOKEN"
        credentials = (CredentialRequirement(alias, f"API token for the {where}{family.noun} account.".replace("  ", " ")),)
    contract = CapabilityContract(
        name=name,
        description=op.sentence.format(where=where),
        parameters=tuple(params),
        credentials=credentials,
        outputs=tuple(OutputField(*o) for o in op.outputs),
        runtime_class=family.runtime_class,
        failure_modes=(
            FailureMode("invalid_parameters", "Arguments fail validation.", "Exit 2 with a usage message."),
            FailureMode("provider_error", "Upstream returned an error.", "Exit 1 with the provider status."),
        ),
        tags=family.tags + ((provider,) if provider else ()),
    )
    deficit = target - len(render_contract_schema(contract))
    return replace(contract, description=_pad(contract.description, deficit, rng))


_IMPL = '''"""Core implementation stub for {name}."""


def run(**params):
    return {{"tool": "{name}", "params": sorted(params)}}
'''


def _synthetic_capsule(contract: CapabilityContract, family: Family, seed: int) -> ToolCapsule:
    deps = normalize_dependencies(list(family.dependencies), "relax_pins")
    files = scaffold_bundle(contract, _IMPL.format(name=contract.name), deps)
    capsule = assemble_capsule(
        contract, files, deps, ValidationEvidence(),
        Provenance(contract.name, 1, "generated", f"synthetic:seed={seed}", SYNTHETIC_EPOCH),
    )
    return replace(capsule, governance=replace(capsule.governance, lifecycle="approved"))


def generate_synthetic_capsules(
    seed: int,
    tool_count: int,
    family_spec: Any = None,
    target_schema_chars: int = DEFAULT_SCHEMA_CHARS,
) -> list[ToolCapsule]:
    """Deterministic confusable-family capsules, all approved.

    Unbranded family tools come first, then provider-branded variants in a
    seeded order.  Each schema is padded toward a per-tool target drawn
    around ``target_schema_chars``.
    """
    if tool_count < 1:
        raise BenchError("INVALID_TOOL_COUNT", "tool_count must be >= 1")
    rng = random.Random(seed)
    families = resolve_families(family_spec)
    generic = [("", f, op) for f in families for op in f.operations]
    branded = [(p, f, op) for p in PROVIDERS[1:] for f in families for op in f.operations]
    rng.shuffle(branded)
    slots = generic + branded
    if tool_count > len(slots):
        raise BenchError("INVALID_TOOL_COUNT", f"families support at most {len(slots)} tools")
    out = []
    for provider, family, op in slots[:tool_count]:
        target = int(min(max(rng.gauss(target_schema_chars, 0.12 * target_schema_chars),
                             0.6 * target_schema_chars), 1.4 * target_schema_chars))
        out.append(_synthetic_capsule(_contract(family, op, provider, target, rng), family, seed))
    return out


def generate_synthetic_catalog(
    seed: int,
    tool_count: int,
    family_spec: Any = None,
    target_schema_chars: int = DEFAULT_SCHEMA_CHARS,
    root: str | Path | None = None,
) -> Catalog:
    catalog = Catalog(root)
    for capsule in generate_synthetic_capsules(seed, tool_count, family_spec, target_schema_chars):
        catalog.register(capsule)
    return catalog


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CaseMetrics:
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float


def compute_case_metrics(expected: Iterable[str], selected: Iterable[str]) -> CaseMetrics:
    e, s = set(expected), set(selected)
    tp, fp, fn = len(e & s), len(s - e), len(e - s)
    p, r, f1 = prf_exact(tp, fp, fn)
    return CaseMetrics(tp, fp, fn, float(p), float(r), float(f1))


@dataclass(frozen=True)
class AggregateMetrics:
    micro_precision: float
    micro_recall: float
    micro_f1: float
    macro_f1: float


def aggregate_metrics(cases: Sequence[CaseMetrics]) -> AggregateMetrics:
    """Micro over summed counts; macro as the unweighted mean of per-case F1."""
    if not cases:
        raise BenchError("EMPTY_SUITE", "no cases to aggregate")
    tp = sum(c.tp for c in cases)
    fp = sum(c.fp for c in cases)
    fn = sum(c.fn for c in cases)
    p, r, f1 = prf_exact(tp, fp, fn)
    macro = sum((prf_exact(c.tp, c.fp, c.fn)[2] for c in cases), Fraction(0)) / len(cases)
    return AggregateMetrics(float(p), float(r), float(f1), float(macro))


# ---------------------------------------------------------------------------
# exposure accounting
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExposureRow:
    naive_tokens: int
    compact_tokens: int
    router_tokens: int
    avg_flow_tokens: float
    flow_tokens: tuple[int, ...] = ()

    @property
    def reduction(self) -> float:
        return 1 - self.avg_flow_tokens / self.naive_tokens if self.naive_tokens else 0.0


def flow_tokens(catalog: Catalog, session: RoutingSession, router_tokens: int) -> int:
    return router_tokens + sum(catalog.card(r.tool_id).schema_tokens for r in session.resolved)


def compute_exposure_row(catalog: Catalog, sessions: Sequence[RoutingSession]) -> ExposureRow:
    if not sessions:
        raise BenchError("EMPTY_SUITE", "exposure needs at least one session")
    cards = catalog.cards
    router_tokens = meta_surface_tokens()
    flows = tuple(flow_tokens(catalog, s, router_tokens) for s in sessions)
    return ExposureRow(
        naive_tokens=sum(c.schema_tokens for c in cards),
        compact_tokens=sum(c.card_tokens for c in cards),
        router_tokens=router_tokens,
        avg_flow_tokens=float(Fraction(sum(flows), len(flows))),
        flow_tokens=flows,
    )


# ---------------------------------------------------------------------------
# suites
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BenchmarkCase:
    case_id: str
    intent: str
    expected: frozenset[str]
    k: int = 6
    tier: str = "lite"


@dataclass(frozen=True)
class Suite:
    suite: str
    tier: str
    catalog: Mapping[str, Any]
    cases: tuple[BenchmarkCase, ...]

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Suite":
        tier = d.get("tier", "lite")
        if tier not in TIERS:
            raise BenchError("INVALID_SUITE", f"unknown tier {tier!r}")
        cases = tuple(
            BenchmarkCase(c["case_id"], c["intent"], frozenset(c.get("expected", ())), c.get("k", 6), tier)
            for c in d["cases"]
        )
        if tier == "realistic" and any(not c.expected for c in cases):
            raise BenchError("INVALID_SUITE", "realistic cases need a non-empty expected set")
        return cls(d["suite"], tier, dict(d.get("catalog", {})), cases)

    def to_dict(self) -> dict[str, Any]:
        return {
            "suite": self.suite,
            "tier": self.tier,
            "catalog": dict(self.catalog),
            "cases": [
                {"case_id": c.case_id, "intent": c.intent, "expected": sorted(c.expected), "k": c.k}
                for c in self.cases
            ],
        }

    def build_catalog(self, root: str | Path | None = None) -> Catalog:
        spec = self.catalog
        return generate_synthetic_catalog(
            spec.get("seed", 0),
            spec.get("tool_count", 250),
            spec.get("families"),
            spec.get("target_schema_chars", DEFAULT_SCHEMA_CHARS),
            root,
        )


def load_suite(path: str | Path) -> Suite:
    return Suite.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


SUITES_DIR = Path(__file__).parent / "data" / "suites"


def builtin_suite(name: str) -> Suite:
    return load_suite(SUITES_DIR / f"{name}.json")


@dataclass(frozen=True)
class CaseResult:
    case_id: str
    intent: str
    expected: tuple[str, ...]
    selected: tuple[str, ...]
    metrics: CaseMetrics
    flow_tokens: int


@dataclass(frozen=True)
class SuiteReport:
    suite: str
    tier: str
    case_count: int
    tool_count: int
    cases: tuple[CaseResult, ...]
    micro_precision: float
    micro_recall: float
    micro_f1: float
    macro_f1: float
    avg_flow_tokens: float
    naive_tokens: int
    compact_tokens: int
    router_tokens: int
    reduction: float = field(default=0.0)


def run_router_suite(
    suite: Suite,
    catalog: Catalog,
    profile: GovernanceProfile | None = None,
    router: Router | None = None,
) -> SuiteReport:
    missing = sorted({t for c in suite.cases for t in c.expected if t not in catalog})
    if missing:
        raise BenchError("SUITE_CATALOG_MISMATCH", f"expected tools absent from catalog: {missing}", tools=missing)
    profile = profile or GovernanceProfile("bench")
    if router is None:
        counter = iter(range(1, 1 << 30))
        router = Router(catalog, [profile], root=None, clock=lambda: SYNTHETIC_EPOCH,
                        id_factory=lambda: f"bench-{next(counter):06d}")
    elif profile.profile_id not in router.profiles:
        router.add_profile(profile, persist=False)

    ordered = sorted(suite.cases, key=lambda c: c.case_id)
    sessions = [router.resolve_session(c.intent, profile.profile_id, c.k) for c in ordered]
    exposure = compute_exposure_row(catalog, sessions)
    results = []
    for case, session, flow in zip(ordered, sessions, exposure.flow_tokens):
        selected = tuple(session.tool_ids)
        results.append(
            CaseResult(case.case_id, case.intent, tuple(sorted(case.expected)), selected,
                       compute_case_metrics(case.expected, selected), flow)
        )
    agg = aggregate_metrics([r.metrics for r in results])
    return SuiteReport(
        suite=suite.suite,
        tier=suite.tier,
        case_count=len(results),
        tool_count=len(catalog),
        cases=tuple(results),
        micro_precision=agg.micro_precision,
        micro_recall=agg.micro_recall,
        micro_f1=agg.micro_f1,
        macro_f1=agg.macro_f1,
        avg_flow_tokens=exposure.avg_flow_tokens,
        naive_tokens=exposure.naive_tokens,
        compact_tokens=exposure.compact_tokens,
        router_tokens=exposure.router_tokens,
        reduction=exposure.reduction,
    )


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

RESULT_COLUMNS = ("suite", "cases", "tools", "micro_f1", "macro_f1", "avg_flow_tok", "naive_tok", "reduction")
EXPOSURE_COLUMNS = (
    "suite", "tools", "full_schema_tok", "compact_tok", "router_tok", "avg_flow_tok", "flow_reduction",
)


def fmt_percent(x: float) -> str:
    return f"{x * 100:.2f}%"


def fmt_f1(x: float) -> str:
    return f"{x:.3f}"


def _rows(reports: Sequence[SuiteReport], table: str) -> tuple[tuple[str, ...], list[list[str]]]:
    if table == "results":
        return RESULT_COLUMNS, [
            [r.suite, str(r.case_count), str(r.tool_count), fmt_f1(r.micro_f1), fmt_f1(r.macro_f1),
             f"{r.avg_flow_tokens:.1f}", str(r.naive_tokens), fmt_percent(r.reduction)]
            for r in reports
        ]
    if table == "exposure":
        return EXPOSURE_COLUMNS, [
            [r.suite, str(r.tool_count), str(r.naive_tokens), str(r.compact_tokens), str(r.router_tokens),
             f"{r.avg_flow_tokens:.1f}", fmt_percent(r.reduction)]
            for r in reports
        ]
    raise BenchError("UNKNOWN_TABLE", f"unknown table {table!r}")


def _case_record(report: SuiteReport, c: CaseResult) -> dict[str, Any]:
    m = c.metrics
    return {
        "record": "case", "suite": report.suite, "case_id": c.case_id, "intent": c.intent,
        "expected": list(c.expected), "selected": list(c.selected),
        "tp": m.tp, "fp": m.fp, "fn": m.fn,
        "precision": m.precision, "recall": m.recall, "f1": m.f1,
        "flow_tokens": c.flow_tokens,
    }


def _aggregate_record(r: SuiteReport) -> dict[str, Any]:
    return {
        "record": "aggregate", "suite": r.suite, "tier": r.tier, "cases": r.case_count, "tools": r.tool_count,
        "micro_precision": r.micro_precision, "micro_recall": r.micro_recall,
        "micro_f1": r.micro_f1, "macro_f1": r.macro_f1,
        "avg_flow_tokens": r.avg_flow_tokens, "naive_tokens": r.naive_tokens,
        "compact_tokens": r.compact_tokens, "router_tokens": r.router_tokens, "reduction": r.reduction,
    }


def emit_report(report: SuiteReport | Sequence[SuiteReport], fmt: str = "table_text", table: str = "results") -> str:
    """Render reports as ``table_text``, ``csv`` or ``jsonl``.

    ``table`` picks the results or exposure layout for the tabular formats;
    jsonl always emits one record per case plus one aggregate per suite.
    """
    reports = [report] if isinstance(report, SuiteReport) else list(report)
    if fmt == "jsonl":
        lines = []
        for r in reports:
            lines += [json.dumps(_case_record(r, c), sort_keys=True) for c in r.cases]
            lines.append(json.dumps(_aggregate_record(r), sort_keys=True))
        return "\n".join(lines) + "\n"
    header, rows = _rows(reports, table)
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
        return buf.getvalue()
    if fmt == "table_text":
        widths = [max(len(h), *(len(row[i]) for row in rows)) for i, h in enumerate(header)]
        fmt_row = lambda cells: "  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(cells, widths)))
        lines = [fmt_row(header), "  ".join("-" * w for w in widths)] + [fmt_row(r) for r in rows]
        return "\n".join(lines) + "\n"
    raise BenchError("UNKNOWN_FORMAT", f"unknown report format {fmt!r}")


def adversarial_detail(report: SuiteReport) -> list[str]:
    """One line per case with its false positives and misses."""
    out = []
    for c in report.cases:
        fps = sorted(set(c.selected) - set(c.expected))
        fns = sorted(set(c.expected) - set(c.selected))
        out.append(f"{c.case_id}: TP={c.metrics.tp} FP={c.metrics.fp} FN={c.metrics.fn} fp={fps} fn={fns}")
    return out
