"""Structural review, acceptance-pattern scoring and live sandbox runs.

Review and pattern scoring are pure functions of the bundle text.  The
sandbox is the only effectful step: it copies the bundle into a throwaway
directory and runs the declared harness with a scrubbed environment.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import re
import shutil
import subprocess
import sys
import tempfile
import time
from collections import Counter
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Mapping, Sequence

from .capsule import (
    BUNDLE_ROLES,
    ROLE_FILENAMES,
    CapabilityContract,
    CredentialRequirement,
    Finding,
    ParameterSpec,
    SandboxResult,
    ValidationEvidence,
    capsule_from_dict,
    flag_for,
)
from .errors import ValidatorError
from .metrics import prf

DEFAULT_TIMEOUT_MS = 60_000
DEFAULT_CAPTURE_LIMIT = 1 << 20
SECRET_MIN_LENGTH = 20
SECRET_MIN_ENTROPY = 3.0

_SECRET_ASSIGN = re.compile(
    r"""["']?(?P<name>[A-Za-z_][A-Za-z0-9_\-]*)["']?\s*[:=]\s*["'](?P<value>[^"'\s]{%d,})["']""" % SECRET_MIN_LENGTH
)
_SECRET_NAME = re.compile(r"key|token|secret|password", re.IGNORECASE)


# ---------------------------------------------------------------------------
# bundle loading
# ---------------------------------------------------------------------------


def load_bundle_dir(path: str | Path) -> dict[str, str]:
    """Read whichever role files exist in a bundle directory."""
    root = Path(path)
    out = {}
    for role, name in ROLE_FILENAMES.items():
        f = root / name
        if f.is_file():
            out[role] = f.read_text(encoding="utf-8")
    return out


def contract_from_tool_card(card: Mapping[str, Any]) -> CapabilityContract:
    return CapabilityContract(
        name=card["name"],
        description=card.get("summary", ""),
        parameters=tuple(
            ParameterSpec(p["name"], p["kind"], p.get("required", True)) for p in card.get("parameters", ())
        ),
        credentials=tuple(CredentialRequirement(a) for a in card.get("credentials", ())),
        runtime_class=card.get("runtime_class", "pure_local"),
        tags=tuple(card.get("tags", ())),
    )


def bundle_contract(path: str | Path, bundle: Mapping[str, str]) -> CapabilityContract:
    capsule_json = Path(path) / "capsule.json"
    if capsule_json.is_file():
        return capsule_from_dict(json.loads(capsule_json.read_text(encoding="utf-8"))).contract
    if "tool_card" not in bundle:
        raise ValidatorError("MISSING_CONTRACT", f"{path} has neither capsule.json nor tool_card.json")
    return contract_from_tool_card(json.loads(bundle["tool_card"]))


# ---------------------------------------------------------------------------
# structural review
# ---------------------------------------------------------------------------


def shannon_entropy(text: str) -> float:
    counts = Counter(text)
    n = len(text)
    return -sum(c / n * math.log2(c / n) for c in counts.values()) if n else 0.0


def find_hardcoded_secrets(text: str) -> list[tuple[str, int]]:
    """(assigned name, line number) for every credential-looking literal."""
    hits = []
    for m in _SECRET_ASSIGN.finditer(text):
        if _SECRET_NAME.search(m.group("name")) and shannon_entropy(m.group("value")) >= SECRET_MIN_ENTROPY:
            hits.append((m.group("name"), text.count("\n", 0, m.start()) + 1))
    return hits


def _json_or_none(text: str | None) -> Any:
    if text is None:
        return None
    try:
        return json.loads(text)
    except ValueError:
        return None


def run_structural_review(bundle: Mapping[str, str], contract: CapabilityContract) -> list[Finding]:
    findings: list[Finding] = []
    for role in ("implementation",) + BUNDLE_ROLES:
        if role not in bundle:
            findings.append(Finding("error", "MISSING_ROLE", f"bundle has no {role} artifact", role))

    for role in sorted(bundle):
        for name, line in find_hardcoded_secrets(bundle[role]):
            findings.append(
                Finding("error", "HARDCODED_SECRET", f"literal credential assigned to {name!r}", f"{role}:{line}")
            )

    if contract.runtime_class == "network_api":
        tests = _json_or_none(bundle.get("tests"))
        if not (isinstance(tests, dict) and tests.get("mock_network") is True):
            findings.append(
                Finding("error", "UNMOCKED_NETWORK", "network tool tests do not declare network mocking", "tests")
            )

    wrapper = bundle.get("wrapper")
    if wrapper is not None:
        for p in contract.parameters:
            if p.required and not re.search(re.escape(flag_for(p.name)) + r"(?![\w-])", wrapper):
                findings.append(
                    Finding("error", "MISSING_FLAG", f"wrapper does not expose {flag_for(p.name)}", "wrapper")
                )
    return findings


# ---------------------------------------------------------------------------
# pattern scoring
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PatternRule:
    pattern_id: str
    pattern: str
    target_roles: tuple[str, ...] = ()


@dataclass(frozen=True)
class PatternSpec:
    required: tuple[PatternRule, ...] = ()
    forbidden: tuple[PatternRule, ...] = ()

    def __post_init__(self) -> None:
        ids = [r.pattern_id for r in self.required + self.forbidden]
        dups = sorted({i for i in ids if ids.count(i) > 1})
        if dups:
            raise ValidatorError("DUPLICATE_PATTERN_ID", f"pattern ids repeat: {dups}")

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "PatternSpec":
        def rules(items: Sequence[Mapping[str, Any]]) -> tuple[PatternRule, ...]:
            return tuple(PatternRule(r["pattern_id"], r["pattern"], tuple(r.get("target_roles", ()))) for r in items)

        return cls(rules(d.get("required", ())), rules(d.get("forbidden", ())))


@dataclass(frozen=True)
class PatternHit:
    pattern_id: str
    kind: str
    matches: int


@dataclass(frozen=True)
class PatternScore:
    tp: int
    fp: int
    fn: int
    details: tuple[PatternHit, ...] = field(default=())

    @property
    def precision(self) -> float:
        return prf(self.tp, self.fp, self.fn)[0]

    @property
    def recall(self) -> float:
        return prf(self.tp, self.fp, self.fn)[1]

    @property
    def f1(self) -> float:
        return prf(self.tp, self.fp, self.fn)[2]


def _target_text(bundle: Mapping[str, str], roles: Sequence[str]) -> str:
    picked = roles or sorted(bundle)
    return "\n".join(bundle.get(r, "") for r in picked)


def score_patterns(bundle: Mapping[str, str], patterns: PatternSpec) -> PatternScore:
    """TP = required matched, FN = required unmatched, FP = forbidden matched."""
    details = []
    tp = fp = fn = 0
    for kind, rules in (("required", patterns.required), ("forbidden", patterns.forbidden)):
        for rule in rules:
            try:
                rx = re.compile(rule.pattern, re.MULTILINE)
            except re.error as exc:
                raise ValidatorError("BAD_PATTERN", f"{rule.pattern_id}: {exc}", pattern_id=rule.pattern_id) from exc
            n = len(rx.findall(_target_text(bundle, rule.target_roles)))
            details.append(PatternHit(rule.pattern_id, kind, n))
            if kind == "required":
                tp, fn = (tp + 1, fn) if n else (tp, fn + 1)
            elif n:
                fp += 1
    return PatternScore(tp, fp, fn, tuple(details))


# ---------------------------------------------------------------------------
# sandbox
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SandboxPolicy:
    """``env_allowlist=None`` exports exactly the manifest's required inputs."""

    timeout_ms: int = DEFAULT_TIMEOUT_MS
    working_dir: str | Path | None = None
    env_allowlist: frozenset[str] | None = None
    capture_limit_bytes: int = DEFAULT_CAPTURE_LIMIT

    def __post_init__(self) -> None:
        if self.timeout_ms <= 0:
            raise ValidatorError("INVALID_POLICY", "timeout_ms must be positive")
        if self.capture_limit_bytes <= 0:
            raise ValidatorError("INVALID_POLICY", "capture_limit_bytes must be positive")


def _parse_manifest(manifest: Any) -> dict[str, Any]:
    if isinstance(manifest, str):
        manifest = _json_or_none(manifest)
    if not isinstance(manifest, dict):
        raise ValidatorError("INVALID_MANIFEST", "harness manifest is not a JSON object")
    cmd = manifest.get("command")
    if not (isinstance(cmd, list) and cmd and all(isinstance(c, str) for c in cmd)):
        raise ValidatorError("INVALID_MANIFEST", "manifest command must be a non-empty string array")
    if not isinstance(manifest.get("expected_exit", 0), int):
        raise ValidatorError("INVALID_MANIFEST", "expected_exit must be an integer")
    return manifest


def _resolve_command(cmd: Sequence[str]) -> list[str]:
    # bundles declare a bare interpreter name; run it with ours
    if cmd[0] in ("python", "python3"):
        return [sys.executable, *cmd[1:]]
    return list(cmd)


def _base_env(workdir: str) -> dict[str, str]:
    return {
        "PATH": os.environ.get("PATH", "/usr/bin:/bin"),
        "HOME": workdir,
        "TMPDIR": workdir,
        "LANG": "C.UTF-8",
        "PYTHONDONTWRITEBYTECODE": "1",
        "PYTHONNOUSERSITE": "1",
    }


def _execute(cmd: list[str], cwd: str, env: dict[str, str], timeout_s: float, limit: int) -> tuple[int | None, bytes]:
    with tempfile.TemporaryFile() as out:
        try:
            proc = subprocess.Popen(cmd, cwd=cwd, env=env, stdin=subprocess.DEVNULL, stdout=out, stderr=subprocess.STDOUT)
        except OSError as exc:
            raise ValidatorError("SANDBOX_SPAWN_FAILURE", f"cannot start {cmd[0]!r}: {exc}") from exc
        try:
            code: int | None = proc.wait(timeout=timeout_s)
        except subprocess.TimeoutExpired:
            proc.kill()
            proc.wait()
            code = None
        out.seek(0)
        return code, out.read(limit)


def run_sandbox(
    bundle: Mapping[str, str] | str | Path,
    manifest: Mapping[str, Any] | str | None = None,
    inputs: Mapping[str, str] | None = None,
    policy: SandboxPolicy | None = None,
) -> SandboxResult:
    """Run a bundle's declared harness in an isolated temp directory.

    Missing required inputs short-circuit to ``skipped_missing_inputs``.  The
    result records input alias names and an output digest, never values.
    """
    policy = policy or SandboxPolicy()
    inputs = dict(inputs or {})
    if isinstance(bundle, (str, Path)):
        src_dir: Path | None = Path(bundle)
        files = load_bundle_dir(src_dir)
    else:
        src_dir, files = None, dict(bundle)
    if manifest is None:
        if "harness_manifest" not in files:
            raise ValidatorError("INVALID_MANIFEST", "bundle has no harness manifest")
        manifest = files["harness_manifest"]
    m = _parse_manifest(manifest)

    required = list(m.get("required_inputs", []))
    allow = set(required) if policy.env_allowlist is None else set(policy.env_allowlist)
    exported = sorted(a for a in inputs if a in allow)
    started = datetime.now(timezone.utc)
    missing = [a for a in required if a not in inputs]
    if missing:
        return SandboxResult(
            status="skipped_missing_inputs",
            started_at=started,
            duration_ms=0,
            output_digest="",
            input_aliases=tuple(exported),
            missing_aliases=tuple(missing),
        )

    base = str(policy.working_dir) if policy.working_dir is not None else None
    workdir = tempfile.mkdtemp(prefix="sandbox-", dir=base)
    try:
        if src_dir is not None:
            shutil.copytree(src_dir, workdir, dirs_exist_ok=True)
        else:
            for role, text in files.items():
                if role in ROLE_FILENAMES:
                    with open(os.path.join(workdir, ROLE_FILENAMES[role]), "w", encoding="utf-8", newline="\n") as fh:
                        fh.write(text)
        env = _base_env(workdir)
        env.update({a: inputs[a] for a in exported})
        timeout_s = policy.timeout_ms / 1000
        t0 = time.monotonic()
        code, output = _execute(_resolve_command(m["command"]), workdir, env, timeout_s, policy.capture_limit_bytes)
        duration_ms = int((time.monotonic() - t0) * 1000)
        help_ok = None
        if code is not None and m.get("help_command"):
            help_code, _ = _execute(
                _resolve_command(m["help_command"]), workdir, env, timeout_s, policy.capture_limit_bytes
            )
            help_ok = help_code == 0
    finally:
        shutil.rmtree(workdir, ignore_errors=True)

    if code is None:
        status, error_code = "failed", "TIMEOUT"
    elif code == m.get("expected_exit", 0):
        status, error_code = "passed", None
    else:
        status, error_code = "failed", "UNEXPECTED_EXIT"
    return SandboxResult(
        status=status,
        started_at=started,
        duration_ms=duration_ms,
        output_digest=hashlib.sha256(output).hexdigest(),
        input_aliases=tuple(exported),
        exit_code=code,
        error_code=error_code,
        cli_help_ok=help_ok,
    )


def build_evidence(findings: Sequence[Finding], sandbox: SandboxResult | None) -> ValidationEvidence:
    return ValidationEvidence(
        review_findings=tuple(findings),
        cli_help_ok=None if sandbox is None else sandbox.cli_help_ok,
        sandbox_result=sandbox,
    )
