"""Governed tool capsules with intent-scoped routing."""

from .bench import (
    aggregate_metrics,
    compute_case_metrics,
    compute_exposure_row,
    emit_report,
    generate_synthetic_catalog,
    load_suite,
    run_router_suite,
)
from .capsule import (
    CapabilityContract,
    ToolCapsule,
    assemble_capsule,
    normalize_dependencies,
    scaffold_bundle,
    transition_lifecycle,
    validate_contract,
)
from .catalog import Catalog, CatalogCard, derive_card, import_mcp_listing, open_catalog, register_capsule
from .errors import ForgeError
from .mcp_surface import McpServer, list_meta_tools, meta_surface_tokens
from .router import GovernanceProfile, Router, RoutingSession
from .validator import run_sandbox, run_structural_review, score_patterns

__version__ = "0.1.0"

__all__ = [
    "CapabilityContract", "Catalog", "CatalogCard", "ForgeError", "GovernanceProfile", "McpServer",
    "Router", "RoutingSession", "ToolCapsule", "aggregate_metrics", "assemble_capsule",
    "compute_case_metrics", "compute_exposure_row", "derive_card", "emit_report",
    "generate_synthetic_catalog", "import_mcp_listing", "list_meta_tools", "load_suite",
    "meta_surface_tokens", "normalize_dependencies", "open_catalog", "register_capsule",
    "run_router_suite", "run_sandbox", "run_structural_review", "scaffold_bundle", "score_patterns",
    "transition_lifecycle", "validate_contract",
]
