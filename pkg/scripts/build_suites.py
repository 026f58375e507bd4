"""Regenerate the router suites under src/capsule_router/data/suites.

Intents are composed from each tool's own family vocabulary.  The lite
suite is checked with a from-scratch scorer so every case's expected tool
is the strict unique top hit; the realistic and adversarial suites mix in
verb synonyms and negations and are only checked for catalog membership.

    python3 scripts/build_suites.py
"""

from __future__ import annotations

import json
import random
import re
from pathlib import Path

from capsule_router.bench import FAMILIES, PROVIDERS, generate_synthetic_catalog

OUT = Path(__file__).resolve().parents[1] / "src" / "capsule_router" / "data" / "suites"

SYNONYMS = {
    "upload": "put", "download": "grab", "delete": "remove", "list": "show", "move": "relocate",
    "send": "post", "read": "check", "create": "open", "merge": "land", "close": "resolve",
    "convert": "turn", "extract": "pull", "compress": "shrink", "search": "look through",
    "update": "change", "get": "look up", "refund": "reverse", "trigger": "kick off",
    "cancel": "stop", "run": "execute", "fetch": "pull", "export": "dump", "pivot": "summarize",
    "filter": "keep", "join": "combine", "dedupe": "clean", "validate": "check",
}


def tool_index() -> dict[str, tuple[str, str, object]]:
    out = {}
    for provider in PROVIDERS:
        for fam in FAMILIES.values():
            for op in fam.operations:
                name = "_".join(([provider] if provider else []) + [fam.name, op.verb, op.obj])
                out[name] = (provider, fam, op)
    return out


def oracle_scores(query: str, cards) -> dict[str, int]:
    words = lambda s: {w for w in re.findall(r"[a-z0-9]+", s.lower()) if len(w) > 1}
    q = words(query)
    return {
        c.tool_id: 3 * len(q & words(c.name)) + 2 * len(q & words(" ".join(c.tags)))
        + 2 * len(q & words(c.summary)) + len(q & words(" ".join(c.param_names)))
        for c in cards
    }


def phrase(tool_id: str, index, rng: random.Random, synonym_rate: float = 0.0) -> str:
    provider, fam, op = index[tool_id]
    verb = SYNONYMS[op.verb] if rng.random() < synonym_rate else op.verb
    obj = op.obj.replace("_", " ")
    where = f"{provider.capitalize()} " if provider else ""
    return rng.choice((
        f"{verb} the {obj} in {where}{fam.noun}",
        f"{verb} a {obj} using {where}{fam.noun}",
        f"{verb} {obj} on {where}{fam.noun}",
    ))


def lite(index) -> dict:
    catalog = generate_synthetic_catalog(7, 250)
    cards = catalog.cards
    rng = random.Random(101)
    picked, seen = [], set()
    for card in cards:
        provider, fam, _ = index[card.tool_id]
        if provider and fam.name not in seen:
            seen.add(fam.name)
            picked.append(card.tool_id)
    rng.shuffle(picked)
    cases = []
    for tool_id in picked:
        provider, fam, op = index[tool_id]
        intent = f"{op.verb} {op.obj.replace('_', ' ')} with {provider} {fam.name}"
        scores = oracle_scores(intent, cards)
        best = max(scores.values())
        winners = [t for t, s in scores.items() if s == best]
        if winners != [tool_id]:
            continue
        cases.append({"case_id": f"lite-{len(cases) + 1:02d}", "intent": intent, "expected": [tool_id], "k": 1})
        if len(cases) == 8:
            break
    assert len(cases) == 8, "not enough unambiguous lite cases"
    return {"suite": "lite", "tier": "lite", "catalog": {"seed": 7, "tool_count": 250, "families": None},
            "cases": cases}


def realistic(index) -> dict:
    catalog = generate_synthetic_catalog(11, 600)
    ids = [c.tool_id for c in catalog.cards]
    rng = random.Random(202)
    cases = []
    for i in range(50):
        n = 1 if i < 20 else 2 if i < 40 else 3
        tools = rng.sample(ids, n)
        clauses = [phrase(t, index, rng, synonym_rate=0.25) for t in tools]
        intent = clauses[0] if n == 1 else ", then ".join(clauses[:-1]) + " and " + clauses[-1]
        cases.append({"case_id": f"l2-{i + 1:02d}", "intent": intent, "expected": sorted(tools),
                      "k": n})
    return {"suite": "l2_realistic", "tier": "realistic",
            "catalog": {"seed": 11, "tool_count": 600, "families": None}, "cases": cases}


# "{p}" and "{q}" are filled with providers whose tools exist in the catalog.
ADVERSARIAL = [
    ("notify the {p} channel, do not upload any file", ["{p}_messaging_send_message"], 3),
    ("send a text-only message to {p} team chat, no attachment upload", ["{p}_messaging_send_message"], 3),
    ("read the latest {p} chat messages but do not delete anything", ["{p}_messaging_read_messages"], 3),
    ("list the files in the {p} bucket without downloading them", ["{p}_storage_list_files"], 3),
    ("download the file from {p} storage, never delete it", ["{p}_storage_download_file"], 3),
    ("move the {p} file to the archive key rather than deleting it", ["{p}_storage_move_file"], 3),
    ("close the {p} issue; do not create a pull request", ["{p}_vcs_close_issue"], 3),
    ("create an issue in {p} about the flaky build, don't merge anything", ["{p}_vcs_create_issue"], 3),
    ("refund the {p} payment instead of creating a new charge", ["{p}_payments_refund_payment"], 3),
    ("get the {p} balance only, no invoices", ["{p}_payments_get_balance"], 3),
    ("search the {p} inbox for the contract, do not send any email", ["{p}_email_search_inbox"], 3),
    ("read the {p} email from legal, leave it undeleted", ["{p}_email_read_email"], 3),
    ("list {p} events for next week without creating or updating any", ["{p}_calendar_list_events"], 3),
    ("cancel the {p} build, do not trigger another one", ["{p}_ci_cancel_build"], 3),
    ("get the {p} build status, not the pipeline list", ["{p}_ci_get_build_status"], 3),
    ("extract text from the {p} pdf, skip compression", ["{p}_documents_extract_text"], 3),
    ("merge the two pdf files with {p} but do not convert them", ["{p}_documents_merge_pdf"], 3),
    ("search {p} contacts, not deals", ["{p}_crm_search_contacts"], 3),
    ("update the {p} contact email, do not create a duplicate contact", ["{p}_crm_update_contact"], 3),
    ("run a {p} query listing customers, do not create a backup", ["{p}_database_run_query"], 3),
    ("fetch {p} latency metrics, no dashboard", ["{p}_analytics_fetch_metrics"], 3),
    ("pivot the csv by region with {p}, do not join other tables", ["{p}_data_pivot_csv"], 3),
    ("upload the report file to {p} storage and then post the link in the {q} chat",
     ["{p}_storage_upload_file", "{q}_messaging_send_message"], 4),
    ("send a {p} email about the invoice, do not send a chat message", ["{p}_email_send_email"], 3),
    ("delete the {p} calendar event but keep the chat message", ["{p}_calendar_delete_event"], 3),
]


def adversarial(index) -> dict:
    catalog = generate_synthetic_catalog(13, 500)
    rng = random.Random(303)
    providers = list(PROVIDERS[1:])
    cases = []
    for i, (intent, expected, k) in enumerate(ADVERSARIAL):
        while True:
            p, q = rng.sample(providers, 2)
            tools = [t.format(p=p, q=q) for t in expected]
            if all(t in catalog for t in tools):
                break
        cases.append({"case_id": f"l3-{i + 1:02d}", "intent": intent.format(p=p.capitalize(), q=q.capitalize()),
                      "expected": sorted(tools), "k": k})
    return {"suite": "l3_adversarial", "tier": "adversarial",
            "catalog": {"seed": 13, "tool_count": 500, "families": None}, "cases": cases}


def main() -> None:
    index = tool_index()
    OUT.mkdir(parents=True, exist_ok=True)
    for suite in (lite(index), realistic(index), adversarial(index)):
        path = OUT / f"{suite['suite']}.json"
        path.write_text(json.dumps(suite, indent=2) + "\n", encoding="utf-8")
        print(f"wrote {path} ({len(suite['cases'])} cases)")


if __name__ == "__main__":
    main()
