"""Capability contracts, tool capsules and their lifecycle.

A contract describes the external shape of a tool (parameters, credentials,
outputs, runtime class, failure handling, evidence).  A capsule binds a
contract to its generated bundle, dependency policy, validation evidence,
governance state and provenance.  Everything here is an immutable value;
the functions are pure apart from ``assemble_capsule`` reading artifact
files when it is handed paths.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Mapping, Sequence

from .errors import CapsuleError

PARAM_KINDS = ("string", "integer", "number", "boolean", "enum", "path")
RUNTIME_CLASSES = ("pure_local", "filesystem", "network_api", "hybrid")
EVIDENCE_KINDS = ("doc_url", "endpoint_fragment", "path_param", "sdk_method", "user_example")
SEVERITIES = ("error", "warning", "info")
LIFECYCLES = ("draft", "pending_review", "approved", "blocked", "deprecated", "failed")
LIFECYCLE_ACTIONS = ("submit", "approve", "block", "unblock", "deprecate", "mark_failed", "reinstate")
SOURCES = ("generated", "imported_mcp", "human")
SANDBOX_STATUSES = ("passed", "failed", "skipped_missing_inputs")

BUNDLE_ROLES = ("wrapper", "tests", "harness_manifest", "readme", "tool_card", "requirements")
ROLE_FILENAMES = {
    "implementation": "impl.py",
    "wrapper": "cli.py",
    "tests": "tests_manifest.json",
    "harness_manifest": "harness.json",
    "readme": "README.md",
    "tool_card": "tool_card.json",
    "requirements": "requirements.txt",
}
IMPORTED_ROLES = ("readme", "tool_card")

SUMMARY_LIMIT = 200
DEFAULT_HARNESS_TIMEOUT_MS = 60_000

_IDENT = re.compile(r"[a-z][a-z0-9_]*")
_ALIAS = re.compile(r"[A-Z][A-Z0-9_]*")


# ---------------------------------------------------------------------------
# contract
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ParameterSpec:
    name: str
    kind: str
    required: bool = True
    description: str = ""
    enum_values: tuple[str, ...] | None = None
    default: Any = None


@dataclass(frozen=True)
class CredentialRequirement:
    env_alias: str
    description: str = ""
    secret: bool = True


@dataclass(frozen=True)
class OutputField:
    name: str
    kind: str
    description: str = ""


@dataclass(frozen=True)
class FailureMode:
    code: str
    description: str = ""
    handling: str = ""


@dataclass(frozen=True)
class EvidenceItem:
    kind: str
    value: str
    source: str = ""


@dataclass(frozen=True)
class CapabilityContract:
    """External, operational and failure shape of a tool, plus its evidence.

    ``tags`` is routing vocabulary carried into the catalog card.
    """

    name: str
    description: str
    parameters: tuple[ParameterSpec, ...] = ()
    credentials: tuple[CredentialRequirement, ...] = ()
    outputs: tuple[OutputField, ...] = ()
    runtime_class: str = "pure_local"
    failure_modes: tuple[FailureMode, ...] = ()
    evidence: tuple[EvidenceItem, ...] = ()
    tags: tuple[str, ...] = ()

    @property
    def credential_aliases(self) -> list[str]:
        return [c.env_alias for c in self.credentials]


@dataclass(frozen=True)
class Finding:
    severity: str
    code: str
    message: str
    location: str = ""


def _default_ok(kind: str, value: Any, enum_values: Sequence[str] | None) -> bool:
    if kind in ("string", "path"):
        return isinstance(value, str)
    if kind == "integer":
        return isinstance(value, int) and not isinstance(value, bool)
    if kind == "number":
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if kind == "boolean":
        return isinstance(value, bool)
    if kind == "enum":
        return isinstance(value, str) and bool(enum_values) and value in enum_values
    return False


def validate_contract(contract: CapabilityContract) -> list[Finding]:
    """Return every invariant violation; an empty list means admissible."""
    out: list[Finding] = []

    def add(code: str, message: str, location: str, severity: str = "error") -> None:
        out.append(Finding(severity, code, message, location))

    if not isinstance(contract.name, str) or not _IDENT.fullmatch(contract.name):
        add("BAD_NAME", f"tool name {contract.name!r} is not a lowercase identifier", "name")
    if not contract.description or not contract.description.strip():
        add("EMPTY_DESCRIPTION", "description is empty", "description", "warning")
    if contract.runtime_class not in RUNTIME_CLASSES:
        add("BAD_RUNTIME_CLASS", f"unknown runtime class {contract.runtime_class!r}", "runtime_class")

    seen: set[str] = set()
    reported: set[str] = set()
    for i, p in enumerate(contract.parameters):
        loc = f"parameters[{i}]"
        if not _IDENT.fullmatch(p.name or ""):
            add("BAD_PARAM_NAME", f"parameter name {p.name!r} is not an identifier", loc)
        if p.name in seen and p.name not in reported:
            add("DUP_PARAM", f"parameter {p.name!r} declared more than once", loc)
            reported.add(p.name)
        seen.add(p.name)
        if p.kind not in PARAM_KINDS:
            add("BAD_KIND", f"parameter kind {p.kind!r} is unknown", loc)
        if p.kind == "enum" and not p.enum_values:
            add("ENUM_WITHOUT_VALUES", f"enum parameter {p.name!r} lists no values", loc)
        if p.default is not None and p.kind in PARAM_KINDS and not _default_ok(p.kind, p.default, p.enum_values):
            add("BAD_DEFAULT", f"default {p.default!r} does not fit kind {p.kind}", loc)

    seen, reported = set(), set()
    for i, o in enumerate(contract.outputs):
        loc = f"outputs[{i}]"
        if not _IDENT.fullmatch(o.name or ""):
            add("BAD_OUTPUT_NAME", f"output name {o.name!r} is not an identifier", loc)
        if o.name in seen and o.name not in reported:
            add("DUP_OUTPUT", f"output {o.name!r} declared more than once", loc)
            reported.add(o.name)
        seen.add(o.name)
        if o.kind not in PARAM_KINDS:
            add("BAD_KIND", f"output kind {o.kind!r} is unknown", loc)

    seen, reported = set(), set()
    for i, c in enumerate(contract.credentials):
        loc = f"credentials[{i}]"
        if not _ALIAS.fullmatch(c.env_alias or ""):
            add("BAD_CRED_ALIAS", f"credential alias {c.env_alias!r} is not an env-style name", loc)
        if c.env_alias in seen and c.env_alias not in reported:
            add("DUP_CRED_ALIAS", f"credential alias {c.env_alias!r} declared more than once", loc)
            reported.add(c.env_alias)
        seen.add(c.env_alias)

    for i, f in enumerate(contract.failure_modes):
        if not _IDENT.fullmatch(f.code or ""):
            add("BAD_FAILURE_CODE", f"failure code {f.code!r} is not an identifier", f"failure_modes[{i}]")
    for i, e in enumerate(contract.evidence):
        if e.kind not in EVIDENCE_KINDS:
            add("BAD_EVIDENCE_KIND", f"evidence kind {e.kind!r} is unknown", f"evidence[{i}]")
    for i, t in enumerate(contract.tags):
        if not _IDENT.fullmatch(t or ""):
            add("BAD_TAG", f"tag {t!r} is not a lowercase identifier", f"tags[{i}]", "warning")
    return out


def summarize(description: str, limit: int = SUMMARY_LIMIT) -> str:
    """Prefix of ``description`` cut at a word boundary, at most ``limit`` chars."""
    text = description.rstrip()
    if len(text) <= limit:
        return text
    if text[limit].isspace():
        return text[:limit].rstrip()
    cut = text[:limit]
    space = max(cut.rfind(" "), cut.rfind("\n"), cut.rfind("\t"))
    return (cut[:space] if space > 0 else cut).rstrip()


# ---------------------------------------------------------------------------
# dependency policy
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DependencySpec:
    package_name: str
    minimum_version: str | None = None
    exact_pin: str | None = None
    policy_note: str = ""

    def render(self) -> str:
        if self.exact_pin:
            return f"{self.package_name}=={self.exact_pin}"
        if self.minimum_version:
            return f"{self.package_name}>={self.minimum_version}"
        return self.package_name


_DEP = re.compile(
    r"(?P<name>[A-Za-z][A-Za-z0-9._-]*)"
    r"(?:\s*(?P<op>==|>=)\s*(?P<ver>\d+(?:\.\d+){1,2}))?"
)


def _vkey(version: str) -> tuple[int, ...]:
    parts = [int(p) for p in version.split(".")]
    return tuple(parts + [0] * (3 - len(parts)))


def normalize_dependencies(raw: Sequence[str], policy: str = "relax_pins") -> list[DependencySpec]:
    """Apply the dependency policy to generator-emitted requirement strings.

    ``relax_pins`` turns ``==X.Y.Z`` into a ``>=X.Y`` floor; ``keep_exact``
    preserves exact pins.  Duplicates merge to the tightest bound (an exact
    pin dominates a floor).  Output is sorted by package name.
    """
    if policy not in ("relax_pins", "keep_exact"):
        raise CapsuleError("UNKNOWN_POLICY", f"unknown dependency policy {policy!r}")
    merged: dict[str, tuple[str | None, str | None]] = {}
    for entry in raw:
        m = _DEP.fullmatch(entry.strip()) if isinstance(entry, str) else None
        if m is None:
            raise CapsuleError("MALFORMED_DEPENDENCY", f"cannot parse dependency {entry!r}", entry=entry)
        name, op, ver = m.group("name").lower(), m.group("op"), m.group("ver")
        if op == "==" and ver.count(".") != 2:
            raise CapsuleError("MALFORMED_DEPENDENCY", f"exact pin must be X.Y.Z in {entry!r}", entry=entry)
        minimum = exact = None
        if op == "==":
            if policy == "relax_pins":
                minimum = ".".join(ver.split(".")[:2])
            else:
                exact = ver
        elif op == ">=":
            minimum = ver
        prev_min, prev_exact = merged.get(name, (None, None))
        if prev_min and (minimum is None or _vkey(prev_min) > _vkey(minimum)):
            minimum = prev_min
        if prev_exact and (exact is None or _vkey(prev_exact) > _vkey(exact)):
            exact = prev_exact
        merged[name] = (minimum, exact)

    out = []
    for name in sorted(merged):
        minimum, exact = merged[name]
        if exact:
            out.append(DependencySpec(name, None, exact, f"{policy}: exact {exact}"))
        elif minimum:
            out.append(DependencySpec(name, minimum, None, f"{policy}: minimum {minimum}"))
        else:
            out.append(DependencySpec(name, None, None, f"{policy}: unconstrained"))
    return out


# ---------------------------------------------------------------------------
# lifecycle
# ---------------------------------------------------------------------------

LIFECYCLE_TABLE: dict[tuple[str, str], str] = {
    ("draft", "submit"): "pending_review",
    ("pending_review", "approve"): "approved",
    ("pending_review", "block"): "blocked",
    ("approved", "block"): "blocked",
    ("approved", "deprecate"): "deprecated",
    ("approved", "mark_failed"): "failed",
    ("blocked", "unblock"): "pending_review",
    ("failed", "reinstate"): "pending_review",
}


def transition_lifecycle(current: str, action: str) -> str:
    try:
        return LIFECYCLE_TABLE[(current, action)]
    except KeyError:
        raise CapsuleError(
            "ILLEGAL_TRANSITION", f"{action!r} is not allowed from {current!r}", state=current, action=action
        ) from None


# ---------------------------------------------------------------------------
# evidence, governance, provenance
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TestResult:
    __test__ = False  # keep pytest from collecting this

    passed_count: int
    total_count: int
    harness_exit: int


@dataclass(frozen=True)
class SandboxResult:
    """Outcome of one live sandbox run.  Holds input alias names, never values."""

    status: str
    started_at: datetime
    duration_ms: int
    output_digest: str
    input_aliases: tuple[str, ...] = ()
    missing_aliases: tuple[str, ...] = ()
    exit_code: int | None = None
    error_code: str | None = None
    cli_help_ok: bool | None = None


@dataclass(frozen=True)
class ValidationEvidence:
    review_findings: tuple[Finding, ...] = ()
    test_result: TestResult | None = None
    cli_help_ok: bool | None = None
    sandbox_result: SandboxResult | None = None

    @property
    def sandbox_passed(self) -> bool:
        return self.sandbox_result is not None and self.sandbox_result.status == "passed"


@dataclass(frozen=True)
class GovernanceState:
    lifecycle: str = "draft"
    pinned_version: int | None = None
    credential_mappings: Mapping[str, str] = field(default_factory=dict)
    sandbox_validated: bool = False


@dataclass(frozen=True)
class ArtifactRef:
    path: str
    sha256: str


@dataclass(frozen=True)
class Provenance:
    tool_id: str
    version: int
    source: str
    origin: str
    created_at: datetime


@dataclass(frozen=True)
class ToolCapsule:
    contract: CapabilityContract
    implementation: ArtifactRef | None
    bundle_artifacts: Mapping[str, ArtifactRef]
    dependencies: tuple[DependencySpec, ...]
    validation: ValidationEvidence
    governance: GovernanceState
    provenance: Provenance
    # role -> text; present on freshly assembled capsules, empty when loaded
    contents: Mapping[str, str] = field(default_factory=dict, compare=False, repr=False)

    @property
    def tool_id(self) -> str:
        return self.provenance.tool_id

    @property
    def version(self) -> int:
        return self.provenance.version

    def artifact_refs(self) -> dict[str, ArtifactRef]:
        refs = dict(self.bundle_artifacts)
        if self.implementation is not None:
            refs["implementation"] = self.implementation
        return refs


def normalize_text(text: str) -> str:
    return text.replace("\r\n", "\n").replace("\r", "\n")


def content_hash(text: str) -> str:
    return hashlib.sha256(normalize_text(text).encode("utf-8")).hexdigest()


def required_roles(source: str) -> tuple[str, ...]:
    if source == "imported_mcp":
        return IMPORTED_ROLES
    return ("implementation",) + BUNDLE_ROLES


def assemble_capsule(
    contract: CapabilityContract,
    bundle_files: Mapping[str, str | Path],
    dependencies: Sequence[DependencySpec],
    evidence: ValidationEvidence,
    provenance: Provenance,
) -> ToolCapsule:
    """Hash every artifact and build a capsule with initial governance.

    ``bundle_files`` maps roles to either text or a path to read.
    """
    if provenance.version < 1:
        raise CapsuleError("INVALID_PROVENANCE", "version must be >= 1")
    if provenance.source not in SOURCES:
        raise CapsuleError("INVALID_PROVENANCE", f"unknown source {provenance.source!r}")
    missing = [r for r in required_roles(provenance.source) if r not in bundle_files]
    if missing:
        raise CapsuleError("MISSING_ARTIFACT_ROLE", f"bundle lacks roles {missing}", roles=missing)
    unknown = [r for r in bundle_files if r not in ROLE_FILENAMES]
    if unknown:
        raise CapsuleError("UNKNOWN_ARTIFACT_ROLE", f"unknown roles {unknown}", roles=unknown)

    texts: dict[str, str] = {}
    for role, src in bundle_files.items():
        if isinstance(src, Path):
            try:
                texts[role] = normalize_text(src.read_text(encoding="utf-8"))
            except (OSError, UnicodeDecodeError) as exc:
                raise CapsuleError("HASH_FAILURE", f"cannot read {role} artifact {src}: {exc}", role=role) from exc
        else:
            texts[role] = normalize_text(src)

    card_text = texts.get("tool_card", "")
    absent = [a for a in contract.credential_aliases if a not in card_text]
    if absent:
        raise CapsuleError("TOOL_CARD_MISMATCH", f"tool card omits credential aliases {absent}", aliases=absent)

    sr = evidence.sandbox_result
    if sr is not None and sr.status == "passed" and evidence.test_result is not None:
        if evidence.test_result.harness_exit != 0:
            raise CapsuleError("INVALID_EVIDENCE", "sandbox passed but harness exited non-zero")

    refs = {role: ArtifactRef(ROLE_FILENAMES[role], content_hash(t)) for role, t in texts.items()}
    implementation = refs.pop("implementation", None)
    lifecycle = "pending_review" if provenance.source == "imported_mcp" else "draft"
    governance = GovernanceState(lifecycle=lifecycle, sandbox_validated=evidence.sandbox_passed)
    return ToolCapsule(
        contract=contract,
        implementation=implementation,
        bundle_artifacts=dict(sorted(refs.items())),
        dependencies=tuple(dependencies),
        validation=evidence,
        governance=governance,
        provenance=provenance,
        contents=texts,
    )


# ---------------------------------------------------------------------------
# deterministic scaffolding
# ---------------------------------------------------------------------------


def flag_for(param_name: str) -> str:
    return "--" + param_name.replace("_", "-")


def _dump(obj: Any) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def _py_str(text: str) -> str:
    # json string literals are valid python literals
    return json.dumps(text)


def _sample_argv(p: ParameterSpec) -> list[str]:
    if p.kind == "boolean":
        return [flag_for(p.name)]
    sample = {"integer": "1", "number": "1.5", "path": "input.txt", "string": "sample"}.get(p.kind)
    if p.kind == "enum":
        sample = (p.enum_values or ("x",))[0]
    return [flag_for(p.name), sample or "sample"]


def _test_cases(contract: CapabilityContract) -> list[dict[str, Any]]:
    required = [p for p in contract.parameters if p.required and p.kind != "boolean"]
    baseline: list[str] = []
    for p in required:
        baseline += _sample_argv(p)
    cases = [{"case_id": "accepts_valid_arguments", "argv": baseline, "expect": "accept"}]
    for p in contract.parameters:
        others = [a for q in required if q.name != p.name for a in _sample_argv(q)]
        if p.required and p.kind != "boolean":
            cases.append({"case_id": f"rejects_missing_{p.name}", "argv": others, "expect": "reject"})
        if p.kind in ("integer", "number"):
            cases.append({
                "case_id": f"rejects_non_numeric_{p.name}",
                "argv": others + [flag_for(p.name), "not-a-number"],
                "expect": "reject",
            })
        if p.kind == "enum":
            cases.append({
                "case_id": f"rejects_unknown_choice_{p.name}",
                "argv": others + [flag_for(p.name), "__invalid_choice__"],
                "expect": "reject",
            })
    return cases


def _wrapper(contract: CapabilityContract) -> str:
    lines = [
        "#!/usr/bin/env python3",
        f'"""Command-line wrapper for {contract.name}. Generated from its capability contract."""',
        "import argparse",
        "import contextlib",
        "import io",
        "import json",
        "import os",
        "import sys",
        "",
        f"TOOL_NAME = {_py_str(contract.name)}",
        f"CREDENTIAL_ALIASES = {json.dumps(contract.credential_aliases)}",
        "",
        "",
        "def build_parser():",
        "    parser = argparse.ArgumentParser(",
        f"        prog=TOOL_NAME, description={_py_str(summarize(contract.description).replace('%', '%%'))}",
        "    )",
    ]
    types = {"string": "str", "path": "str", "integer": "int", "number": "float", "enum": "str"}
    for p in contract.parameters:
        help_text = _py_str((p.description or p.name).replace("%", "%%"))
        args = [_py_str(flag_for(p.name)), f"dest={_py_str(p.name)}"]
        if p.kind == "boolean":
            args.append("action=argparse.BooleanOptionalAction")
            args.append(f"default={bool(p.default)!r}")
        else:
            args.append(f"type={types.get(p.kind, 'str')}")
            if p.kind == "enum":
                args.append(f"choices={json.dumps(list(p.enum_values or ()))}")
            if p.required:
                args.append("required=True")
            elif p.default is not None:
                args.append(f"default={p.default!r}")
        args.append(f"help={help_text}")
        lines.append(f"    parser.add_argument({', '.join(args)})")
    lines += [
        '    parser.add_argument("--self-test", action="store_true", help="Run bundled argument checks and exit.")',
        "    return parser",
        "",
        "",
        "def self_test():",
        "    here = os.path.dirname(os.path.abspath(__file__))",
        '    with open(os.path.join(here, "tests_manifest.json"), encoding="utf-8") as fh:',
        "        manifest = json.load(fh)",
        "    failures = []",
        '    for case in manifest["cases"]:',
        "        try:",
        "            with contextlib.redirect_stderr(io.StringIO()):",
        '                build_parser().parse_args(case["argv"])',
        '            ok = case["expect"] == "accept"',
        "        except SystemExit as exc:",
        '            ok = case["expect"] == "reject" and exc.code != 0',
        "        if not ok:",
        '            failures.append(case["case_id"])',
        '    print(json.dumps({"cases": len(manifest["cases"]), "failures": failures}, sort_keys=True))',
        "    return 1 if failures else 0",
        "",
        "",
        "def main(argv=None):",
        "    argv = sys.argv[1:] if argv is None else argv",
        '    if "--self-test" in argv:',
        "        return self_test()",
        "    params = vars(build_parser().parse_args(argv))",
        '    params.pop("self_test", None)',
        "    missing = [alias for alias in CREDENTIAL_ALIASES if not os.environ.get(alias)]",
        "    if missing:",
        '        print(json.dumps({"error": "MISSING_CREDENTIAL", "aliases": missing}), file=sys.stderr)',
        "        return 2",
        "    import impl",
        "",
        "    result = impl.run(**params)",
        "    print(json.dumps(result, sort_keys=True, default=str))",
        "    return 0",
        "",
        "",
        'if __name__ == "__main__":',
        "    sys.exit(main())",
    ]
    return "\n".join(lines) + "\n"


def tool_card_dict(contract: CapabilityContract) -> dict[str, Any]:
    return {
        "name": contract.name,
        "summary": summarize(contract.description),
        "tags": list(contract.tags),
        "parameters": [{"name": p.name, "kind": p.kind, "required": p.required} for p in contract.parameters],
        "credentials": contract.credential_aliases,
        "runtime_class": contract.runtime_class,
    }


def tool_card_text(contract: CapabilityContract) -> str:
    return _dump(tool_card_dict(contract))


def readme_text(contract: CapabilityContract) -> str:
    out = [f"# {contract.name}", "", contract.description.strip(), "", "## Usage", "", "```"]
    usage = ["python cli.py"] + [" ".join(_sample_argv(p)) for p in contract.parameters if p.required]
    out += [" ".join(usage), "```", "", "## Parameters", ""]
    for p in contract.parameters:
        req = "required" if p.required else "optional"
        out.append(f"- `{flag_for(p.name)}` ({p.kind}, {req}): {p.description}")
    if not contract.parameters:
        out.append("- none")
    out += ["", "## Credentials", ""]
    if contract.credentials:
        for c in contract.credentials:
            out.append(f"- `{c.env_alias}`: read from the environment. {c.description}".rstrip())
    else:
        out.append("- none")
    out += ["", f"Runtime class: `{contract.runtime_class}`", ""]
    return "\n".join(out)


def scaffold_bundle(
    contract: CapabilityContract,
    core_implementation: str,
    dependencies: Sequence[DependencySpec] = (),
) -> dict[str, str]:
    """Deterministically emit every bundle artifact around a core implementation.

    The result maps role to LF-normalized text and is byte-identical for
    identical inputs.  Credential aliases appear by name only.
    """
    errors = [f for f in validate_contract(contract) if f.severity == "error"]
    if errors:
        raise CapsuleError("INVALID_CONTRACT", f"{len(errors)} contract errors", findings=errors)
    if not core_implementation or not core_implementation.strip():
        raise CapsuleError("INVALID_CONTRACT", "core implementation is empty")

    mock_network = contract.runtime_class in ("network_api", "hybrid")
    tests = {"tool": contract.name, "mock_network": mock_network, "cases": _test_cases(contract)}
    harness = {
        "command": ["python", ROLE_FILENAMES["wrapper"], "--self-test"],
        "help_command": ["python", ROLE_FILENAMES["wrapper"], "--help"],
        "expected_exit": 0,
        "timeout_ms": DEFAULT_HARNESS_TIMEOUT_MS,
        "mock_network": mock_network,
        "required_inputs": contract.credential_aliases,
    }
    requirements = "".join(d.render() + "\n" for d in sorted(dependencies, key=lambda d: d.package_name))
    files = {
        "implementation": core_implementation,
        "wrapper": _wrapper(contract),
        "tests": _dump(tests),
        "harness_manifest": _dump(harness),
        "readme": readme_text(contract),
        "tool_card": tool_card_text(contract),
        "requirements": requirements,
    }
    return {role: normalize_text(text) for role, text in files.items()}


# ---------------------------------------------------------------------------
# serialization (capsule.json)
# ---------------------------------------------------------------------------


def format_ts(ts: datetime) -> str:
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc).isoformat().replace("+00:00", "Z")


def parse_ts(text: str) -> datetime:
    return datetime.fromisoformat(text.replace("Z", "+00:00")).astimezone(timezone.utc)


def contract_to_dict(c: CapabilityContract) -> dict[str, Any]:
    return {
        "name": c.name,
        "description": c.description,
        "parameters": [
            {
                "name": p.name,
                "kind": p.kind,
                "required": p.required,
                "description": p.description,
                "enum_values": list(p.enum_values) if p.enum_values is not None else None,
                "default": p.default,
            }
            for p in c.parameters
        ],
        "credentials": [
            {"env_alias": k.env_alias, "description": k.description, "secret": k.secret} for k in c.credentials
        ],
        "outputs": [{"name": o.name, "kind": o.kind, "description": o.description} for o in c.outputs],
        "runtime_class": c.runtime_class,
        "failure_modes": [
            {"code": f.code, "description": f.description, "handling": f.handling} for f in c.failure_modes
        ],
        "evidence": [{"kind": e.kind, "value": e.value, "source": e.source} for e in c.evidence],
        "tags": list(c.tags),
    }


def contract_from_dict(d: Mapping[str, Any]) -> CapabilityContract:
    return CapabilityContract(
        name=d["name"],
        description=d.get("description", ""),
        parameters=tuple(
            ParameterSpec(
                name=p["name"],
                kind=p["kind"],
                required=p.get("required", True),
                description=p.get("description", ""),
                enum_values=tuple(p["enum_values"]) if p.get("enum_values") is not None else None,
                default=p.get("default"),
            )
            for p in d.get("parameters", ())
        ),
        credentials=tuple(
            CredentialRequirement(k["env_alias"], k.get("description", ""), k.get("secret", True))
            for k in d.get("credentials", ())
        ),
        outputs=tuple(OutputField(o["name"], o["kind"], o.get("description", "")) for o in d.get("outputs", ())),
        runtime_class=d.get("runtime_class", "pure_local"),
        failure_modes=tuple(
            FailureMode(f["code"], f.get("description", ""), f.get("handling", "")) for f in d.get("failure_modes", ())
        ),
        evidence=tuple(EvidenceItem(e["kind"], e["value"], e.get("source", "")) for e in d.get("evidence", ())),
        tags=tuple(d.get("tags", ())),
    )


def sandbox_result_to_dict(s: SandboxResult) -> dict[str, Any]:
    return {
        "status": s.status,
        "started_at": format_ts(s.started_at),
        "duration_ms": s.duration_ms,
        "output_digest": s.output_digest,
        "input_aliases": list(s.input_aliases),
        "missing_aliases": list(s.missing_aliases),
        "exit_code": s.exit_code,
        "error_code": s.error_code,
        "cli_help_ok": s.cli_help_ok,
    }


def sandbox_result_from_dict(d: Mapping[str, Any]) -> SandboxResult:
    return SandboxResult(
        status=d["status"],
        started_at=parse_ts(d["started_at"]),
        duration_ms=d["duration_ms"],
        output_digest=d["output_digest"],
        input_aliases=tuple(d.get("input_aliases", ())),
        missing_aliases=tuple(d.get("missing_aliases", ())),
        exit_code=d.get("exit_code"),
        error_code=d.get("error_code"),
        cli_help_ok=d.get("cli_help_ok"),
    )


def evidence_to_dict(v: ValidationEvidence) -> dict[str, Any]:
    tr = v.test_result
    return {
        "review_findings": [
            {"severity": f.severity, "code": f.code, "message": f.message, "location": f.location}
            for f in v.review_findings
        ],
        "test_result": None
        if tr is None
        else {"passed_count": tr.passed_count, "total_count": tr.total_count, "harness_exit": tr.harness_exit},
        "cli_help_ok": v.cli_help_ok,
        "sandbox_result": None if v.sandbox_result is None else sandbox_result_to_dict(v.sandbox_result),
    }


def evidence_from_dict(d: Mapping[str, Any]) -> ValidationEvidence:
    tr = d.get("test_result")
    sr = d.get("sandbox_result")
    return ValidationEvidence(
        review_findings=tuple(Finding(**f) for f in d.get("review_findings", ())),
        test_result=None if tr is None else TestResult(**tr),
        cli_help_ok=d.get("cli_help_ok"),
        sandbox_result=None if sr is None else sandbox_result_from_dict(sr),
    )


def governance_to_dict(g: GovernanceState) -> dict[str, Any]:
    return {
        "lifecycle": g.lifecycle,
        "pinned_version": g.pinned_version,
        "credential_mappings": dict(sorted(g.credential_mappings.items())),
        "sandbox_validated": g.sandbox_validated,
    }


def governance_from_dict(d: Mapping[str, Any]) -> GovernanceState:
    return GovernanceState(
        lifecycle=d["lifecycle"],
        pinned_version=d.get("pinned_version"),
        credential_mappings=dict(d.get("credential_mappings", {})),
        sandbox_validated=d.get("sandbox_validated", False),
    )


def capsule_to_dict(c: ToolCapsule) -> dict[str, Any]:
    p = c.provenance
    return {
        "contract": contract_to_dict(c.contract),
        "implementation": None
        if c.implementation is None
        else {"path": c.implementation.path, "sha256": c.implementation.sha256},
        "bundle_artifacts": {
            role: {"path": ref.path, "sha256": ref.sha256} for role, ref in sorted(c.bundle_artifacts.items())
        },
        "dependencies": [
            {
                "package_name": d.package_name,
                "minimum_version": d.minimum_version,
                "exact_pin": d.exact_pin,
                "policy_note": d.policy_note,
            }
            for d in c.dependencies
        ],
        "validation": evidence_to_dict(c.validation),
        "governance": governance_to_dict(c.governance),
        "provenance": {
            "tool_id": p.tool_id,
            "version": p.version,
            "source": p.source,
            "origin": p.origin,
            "created_at": format_ts(p.created_at),
        },
    }


def capsule_from_dict(d: Mapping[str, Any]) -> ToolCapsule:
    impl = d.get("implementation")
    p = d["provenance"]
    return ToolCapsule(
        contract=contract_from_dict(d["contract"]),
        implementation=None if impl is None else ArtifactRef(impl["path"], impl["sha256"]),
        bundle_artifacts={role: ArtifactRef(r["path"], r["sha256"]) for role, r in d["bundle_artifacts"].items()},
        dependencies=tuple(DependencySpec(**dep) for dep in d.get("dependencies", ())),
        validation=evidence_from_dict(d.get("validation", {})),
        governance=governance_from_dict(d["governance"]),
        provenance=Provenance(p["tool_id"], p["version"], p["source"], p["origin"], parse_ts(p["created_at"])),
    )


def capsule_to_json(c: ToolCapsule) -> str:
    return _dump(capsule_to_dict(c))


def with_governance(capsule: ToolCapsule, governance: GovernanceState) -> ToolCapsule:
    return replace(capsule, governance=governance)
