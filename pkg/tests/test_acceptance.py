"""Acceptance criteria, one test each.

Every test records a PASS/FAIL line that is printed in the terminal summary
(and to stdout under ``-s``) before its assertion runs.
"""

import itertools
import json
import random
import time
from dataclasses import replace

from capsule_router.bench import (
    ExposureRow,
    adversarial_detail,
    aggregate_metrics,
    builtin_suite,
    compute_case_metrics,
    fmt_percent,
    generate_synthetic_capsules,
    generate_synthetic_catalog,
    run_router_suite,
)
from capsule_router.capsule import LIFECYCLE_ACTIONS as ACTIONS, LIFECYCLES, transition_lifecycle
from capsule_router.catalog import derive_card, open_catalog
from capsule_router.errors import CapsuleError, RouterError
from capsule_router.mcp_surface import McpServer, meta_surface_tokens
from capsule_router.router import Router
from capsule_router.validator import (
    PatternSpec,
    SandboxPolicy,
    load_bundle_dir,
    run_sandbox,
    score_patterns,
)

from conftest import ACCEPTANCE, Clock, counter_ids
from e2e_corpus import write_corpus
from oracles import oracle_aggregate


def check(label, ok, detail):
    ACCEPTANCE.append((label, bool(ok), detail))
    print(f"{'PASS' if ok else 'FAIL'}  {label}: {detail}")
    assert ok, detail


def test_table1_reduction_arithmetic():
    start = time.perf_counter()
    rows = [(89_665, 948.0, "98.94%"), (214_464, 972.5, "99.55%"), (178_165, 811.1, "99.54%")]
    got = [fmt_percent(ExposureRow(naive, 0, meta_surface_tokens(), avg).reduction) for naive, avg, _ in rows]
    elapsed = time.perf_counter() - start
    check("table1 reductions", got == [r[2] for r in rows] and elapsed < 1.0, f"{got} in {elapsed:.4f}s")


def test_desk_scale_reduction():
    suite = builtin_suite("l2_realistic")
    start = time.perf_counter()
    report = run_router_suite(suite, suite.build_catalog())
    elapsed = time.perf_counter() - start
    k_ok = all(c.k <= 6 for c in suite.cases)
    drift = (report.naive_tokens - 214_464) / 214_464
    ok = (report.tool_count == 600 and report.case_count == 50 and k_ok
          and abs(drift) <= 0.05 and report.reduction >= 0.99 and elapsed < 5.0)
    check("600-tool reduction", ok,
          f"naive={report.naive_tokens} ({drift:+.2%}) reduction={fmt_percent(report.reduction)} "
          f"avg_flow={report.avg_flow_tokens:.1f} in {elapsed:.2f}s")


def test_surface_constancy():
    listings, tokens = set(), set()
    for n in (10, 250, 600):
        server = McpServer(Router(generate_synthetic_catalog(3, n)), "default", lambda *a: (0, ""))
        reply = server.handle_request({"jsonrpc": "2.0", "id": 1, "method": "tools/list"})
        listings.add(json.dumps(reply, sort_keys=True))
        tokens.add(meta_surface_tokens())
    check("surface constancy", len(listings) == 1 and len(tokens) == 1, f"router_tokens={sorted(tokens)}")


def test_selection_quality():
    lite = builtin_suite("lite")
    lite_report = run_router_suite(lite, lite.build_catalog())
    adv = builtin_suite("l3_adversarial")
    adv_report = run_router_suite(adv, adv.build_catalog())
    detail = adversarial_detail(adv_report)
    for line in detail:
        print("  " + line)
    ok = lite_report.case_count == 8 and lite_report.micro_f1 == 1.0 and len(detail) == adv_report.case_count
    check("selection quality", ok,
          f"lite micro_f1={lite_report.micro_f1:.3f}; adversarial micro_f1={adv_report.micro_f1:.3f} "
          f"over {adv_report.case_count} cases (no target)")


def test_scorer_oracle_equivalence():
    rng = random.Random(1000)
    pool = [f"tool_{i}" for i in range(12)]
    cases = [(set(rng.sample(pool, rng.randint(0, 5))), set(rng.sample(pool, rng.randint(0, 6))))
             for _ in range(1000)]
    mismatches = 0
    for e, s in cases:
        m = compute_case_metrics(e, s)
        if (m.f1, m.f1) != oracle_aggregate([(e, s)]):
            mismatches += 1
    agg = aggregate_metrics([compute_case_metrics(e, s) for e, s in cases])
    expected = oracle_aggregate(cases)
    ok = mismatches == 0 and (agg.micro_f1, agg.macro_f1) == expected
    check("scorer oracle", ok, f"micro={agg.micro_f1!r} macro={agg.macro_f1!r} case mismatches={mismatches}")


QUERIES = ["upload file to storage", "send message to channel", "create issue", "list files",
           "download invoice", "post message", "delete file storage", "read messages"]


def test_governance_soundness():
    cat = generate_synthetic_catalog(21, 40, ["storage", "messaging", "vcs", "payments"])
    ids = [c.tool_id for c in cat.cards]
    router = Router(cat, clock=Clock(), id_factory=counter_ids())
    rng = random.Random(7)
    executed = []

    def spy(tool_id, version, arguments):
        executed.append(tool_id)
        return 0, "ok"

    trials = 10_000
    leaked = bypassed = denials = 0
    for _ in range(trials):
        for tid in rng.sample(ids, 2):
            gov = cat.capsule(tid).governance
            cat.update_governance(tid, replace(gov, lifecycle=rng.choice(LIFECYCLES)))
        session = router.resolve_session(rng.choice(QUERIES), "default", rng.randint(1, 6))
        leaked += sum(cat.card(t).lifecycle != "approved" for t in session.tool_ids)

        outside = rng.choice([t for t in ids if t not in session.tool_ids])
        before = len(executed)
        try:
            router.gate_call(session.session_id, outside, {"x": 1}, spy)
            bypassed += 1
        except RouterError as exc:
            bypassed += exc.code != "NOT_IN_SESSION"
            denials += 1
        bypassed += len(executed) != before
    audited = len(router.query_audit(event="deny"))
    ok = leaked == 0 and bypassed == 0 and not executed and audited == denials == trials
    check("governance soundness", ok,
          f"{trials} trials, non-approved resolved={leaked}, out-of-session executed={len(executed)}, "
          f"denies={denials} audited={audited}")


EXPECTED_EDGES = {
    ("draft", "submit"): "pending_review",
    ("pending_review", "approve"): "approved",
    ("pending_review", "block"): "blocked",
    ("approved", "block"): "blocked",
    ("approved", "deprecate"): "deprecated",
    ("approved", "mark_failed"): "failed",
    ("blocked", "unblock"): "pending_review",
    ("failed", "reinstate"): "pending_review",
}


def test_lifecycle_machine():
    wrong = []
    for state, action in itertools.product(LIFECYCLES, ACTIONS):
        try:
            got = transition_lifecycle(state, action)
        except CapsuleError as exc:
            got = exc.code
        want = EXPECTED_EDGES.get((state, action), "ILLEGAL_TRANSITION")
        if got != want:
            wrong.append((state, action, got))
    ok = len(LIFECYCLES) == 6 and len(ACTIONS) == 7 and not wrong
    check("lifecycle machine", ok, f"{len(LIFECYCLES)}x{len(ACTIONS)} pairs, mismatches={wrong}")


def test_validator_split(tmp_path):
    tp = fp = fn = 0
    pattern_perfect_live_fail = []
    for entry in write_corpus(tmp_path):
        s = score_patterns(load_bundle_dir(entry.bundle_dir), PatternSpec.from_dict(entry.patterns))
        tp, fp, fn = tp + s.tp, fp + s.fp, fn + s.fn
        run = run_sandbox(entry.bundle_dir, inputs=entry.inputs)
        if s.fp == s.fn == 0 and run.status == "failed":
            pattern_perfect_live_fail.append(entry.name)
    precision, recall = tp / (tp + fp), tp / (tp + fn)

    slow = run_sandbox({}, {"command": ["python", "-c", "import time; time.sleep(30)"], "expected_exit": 0},
                       policy=SandboxPolicy(timeout_ms=200))
    missing = run_sandbox({}, {"command": ["python", "-c", "pass"], "expected_exit": 0,
                               "required_inputs": ["API_TOKEN"]})
    ok = (precision == 1.0 and recall < 1.0 and pattern_perfect_live_fail
          and slow.error_code == "TIMEOUT" and missing.status == "skipped_missing_inputs")
    check("validator split", ok,
          f"precision={precision:.3f} recall={recall:.3f} live-fail={pattern_perfect_live_fail} "
          f"timeout={slow.error_code} missing={missing.status}")


def test_persistence_round_trip(tmp_path):
    caps = generate_synthetic_capsules(17, 100)
    cat = open_catalog(tmp_path)
    for c in caps:
        cat.register(c)
    again = open_catalog(tmp_path)
    unequal = [c.tool_id for c in caps if again.card(c.tool_id).to_json() != derive_card(c).to_json()]

    victim = caps[42].tool_id
    path = tmp_path / "tools" / victim / "1" / "cli.py"
    path.write_text(path.read_text() + "\n# edited\n")
    damaged = open_catalog(tmp_path)
    ok = len(again) == 100 and not unequal and set(damaged.quarantined) == {victim} and len(damaged) == 99
    check("persistence round-trip", ok,
          f"reopened={len(again)} card mismatches={len(unequal)} quarantined={sorted(damaged.quarantined)}")


def test_wire_conformance(small_catalog):
    from test_mcp_surface import GOLDEN, WIRE_SCRIPT, echo_executor, run_wire

    from capsule_router.router import GovernanceProfile

    profile = GovernanceProfile("default", credential_scope=frozenset({"slack-bot"}))
    server = McpServer(Router(small_catalog, [profile], clock=Clock(), id_factory=counter_ids()),
                       "default", echo_executor)
    responses = run_wire(server, [json.dumps(m, sort_keys=True) for m in WIRE_SCRIPT])
    golden = (GOLDEN / "wire_session.jsonl").read_text().splitlines()
    listed = [json.loads(r) for r in responses if json.loads(r)["id"] == 2][0]["result"]["tools"]
    methods = {m.get("params", {}).get("name", m["method"]) for m in WIRE_SCRIPT}
    covered = {"initialize", "tools/list", "search_tools", "resolve_tools", "describe_tool", "call_tool"} <= methods
    ok = responses == golden and len(listed) == 5 and covered
    check("wire conformance", ok, f"{len(responses)} replies match golden, tools/list={len(listed)}")
