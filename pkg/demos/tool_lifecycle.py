"""Walk one tool from contract to governed, routed execution.

    python3 demos/tool_lifecycle.py

Builds a word-count tool, validates it in the sandbox, registers it next to
a few synthetic neighbours, moves it through review, then resolves and
calls it the way an agent would.
"""

import tempfile
from datetime import datetime, timezone
from pathlib import Path

from capsule_router import (
    CapabilityContract,
    Router,
    assemble_capsule,
    open_catalog,
    run_sandbox,
    run_structural_review,
    scaffold_bundle,
)
from capsule_router.bench import generate_synthetic_capsules
from capsule_router.capsule import OutputField, ParameterSpec, Provenance
from capsule_router.errors import RouterError
from capsule_router.executor import BundleExecutor
from capsule_router.validator import build_evidence

IMPL = """from collections import Counter


def run(input_path, top=5):
    with open(input_path, encoding="utf-8") as fh:
        words = fh.read().lower().split()
    return Counter(words).most_common(int(top))
"""

contract = CapabilityContract(
    name="text_word_count",
    description="Counts the most frequent words in a local text file.",
    parameters=(
        ParameterSpec("input_path", "path", True, "Text file to read."),
        ParameterSpec("top", "integer", False, "How many words to report.", default=5),
    ),
    outputs=(OutputField("counts", "string", "JSON list of word and count pairs."),),
    tags=("text", "documents"),
)

with tempfile.TemporaryDirectory() as tmp:
    root = Path(tmp) / "catalog"
    catalog = open_catalog(root)
    for neighbour in generate_synthetic_capsules(seed=4, tool_count=30, family_spec=["documents", "storage"]):
        catalog.register(neighbour)

    files = scaffold_bundle(contract, IMPL)
    findings = run_structural_review(files, contract)
    sandbox = run_sandbox(files)
    print(f"review findings: {len(findings)}  sandbox: {sandbox.status} (exit {sandbox.exit_code})")

    capsule = assemble_capsule(
        contract, files, [], build_evidence(findings, sandbox),
        Provenance(contract.name, 1, "generated", "demo", datetime.now(timezone.utc)),
    )
    catalog.register(capsule)
    router = Router(catalog)

    def resolve():
        session = router.resolve_session("count words in a text file", k=3)
        print(f"  session {session.session_id[:8]}: {list(session.tool_ids)}")
        return session

    print(f"lifecycle {catalog.card(contract.name).lifecycle}: not routable yet")
    resolve()
    for action in ("submit", "approve"):
        router.apply_governance_action(contract.name, action, actor="reviewer@example.com")
    print(f"lifecycle {catalog.card(contract.name).lifecycle}:")
    session = resolve()

    sample = Path(tmp) / "notes.txt"
    sample.write_text("the router routes the tools the agent asks for\n")
    outcome = router.gate_call(session.session_id, contract.name, {"input_path": str(sample), "top": 2},
                               BundleExecutor(catalog))
    print(f"call exit {outcome.exit_status}: {outcome.output.strip()}")

    try:
        router.gate_call(session.session_id, "storage_delete_file", {"bucket": "b", "object_key": "k"},
                         BundleExecutor(catalog))
    except RouterError as exc:
        print(f"out-of-session call denied: {exc.code}")

    router.apply_governance_action(contract.name, "block", actor="security@example.com")
    resolve()
    print("audit trail:")
    for rec in router.query_audit():
        print(f"  {rec.event:<17} {rec.outcome:<5} {rec.tool_id or '-':<20} {rec.error_code or ''}")
