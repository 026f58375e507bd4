from __future__ import annotations

import itertools
from dataclasses import replace
from datetime import datetime, timedelta, timezone

import pytest

from capsule_router.capsule import (
    CapabilityContract,
    CredentialRequirement,
    OutputField,
    ParameterSpec,
    Provenance,
    ToolCapsule,
    ValidationEvidence,
    assemble_capsule,
    normalize_dependencies,
    scaffold_bundle,
)
from capsule_router.catalog import Catalog
from capsule_router.router import GovernanceProfile, Router

T0 = datetime(2026, 3, 1, 12, 0, tzinfo=timezone.utc)

CSV_IMPL = """import csv


def run(input_path, delimiter=","):
    with open(input_path, newline="") as fh:
        return list(csv.reader(fh, delimiter=delimiter))
"""


def csv_pivot_contract(**overrides) -> CapabilityContract:
    base = CapabilityContract(
        name="csv_pivot",
        description="Pivot a CSV file into a summary table grouped by one column.",
        parameters=(
            ParameterSpec("input_path", "path", True, "CSV file to read."),
            ParameterSpec("delimiter", "string", False, "Field separator.", default=","),
        ),
        outputs=(OutputField("table", "string", "Pivoted CSV."),),
        runtime_class="pure_local",
        tags=("csv", "data"),
    )
    return replace(base, **overrides)


def slack_contract(name: str = "slack_send_message", tags=("messaging", "slack")) -> CapabilityContract:
    return CapabilityContract(
        name=name,
        description="Send a text message to a Slack channel.",
        parameters=(
            ParameterSpec("channel", "string", True, "Channel name."),
            ParameterSpec("text", "string", True, "Message body."),
        ),
        credentials=(CredentialRequirement("SLACK_BOT_TOKEN", "Bot token."),),
        outputs=(OutputField("message_id", "string", "Posted message id."),),
        runtime_class="network_api",
        tags=tags,
    )


def make_capsule(
    contract: CapabilityContract | None = None,
    version: int = 1,
    lifecycle: str | None = "approved",
    impl: str = CSV_IMPL,
    **gov,
) -> ToolCapsule:
    contract = contract or csv_pivot_contract()
    deps = normalize_dependencies(["requests==2.31.0"])
    files = scaffold_bundle(contract, impl, deps)
    cap = assemble_capsule(
        contract, files, deps, ValidationEvidence(),
        Provenance(contract.name, version, "generated", "test", T0),
    )
    changes = dict(gov)
    if lifecycle is not None:
        changes["lifecycle"] = lifecycle
    return replace(cap, governance=replace(cap.governance, **changes)) if changes else cap


class Clock:
    def __init__(self, start: datetime = T0) -> None:
        self.now = start

    def __call__(self) -> datetime:
        return self.now

    def advance(self, seconds: float) -> None:
        self.now += timedelta(seconds=seconds)


def counter_ids(prefix: str = "s"):
    c = itertools.count(1)
    return lambda: f"{prefix}-{next(c):04d}"


@pytest.fixture
def clock() -> Clock:
    return Clock()


@pytest.fixture
def small_catalog() -> Catalog:
    cat = Catalog()
    cat.register(make_capsule())
    cat.register(make_capsule(slack_contract(), credential_mappings={"SLACK_BOT_TOKEN": "slack-bot"}))
    cat.register(make_capsule(csv_pivot_contract(name="csv_filter", description="Filter CSV rows by value.")))
    return cat


@pytest.fixture
def router(small_catalog: Catalog, clock: Clock) -> Router:
    profile = GovernanceProfile("default", credential_scope=frozenset({"slack-bot"}))
    return Router(small_catalog, [profile], clock=clock, id_factory=counter_ids())


# Acceptance criteria append (label, passed, detail) here; the summary hook prints them.
ACCEPTANCE: list[tuple[str, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label, ok, detail in ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {label}: {detail}")
