"""Built-in checks, their stage placement and the controls they enforce."""

from __future__ import annotations

from dataclasses import dataclass

STAGES = ("lint", "optimize", "parse", "validate", "observe", "deploy")
GATE_STAGES = STAGES[:-1]
SEVERITIES = ("error", "warning", "advisory")

CONTROL_NAMES = {
    "C1": "Versioning",
    "C2": "Consistency",
    "C3": "Documentation",
    "C4": "Ownership",
    "C5": "Testing",
    "C6": "Validation",
    "C7": "Uniqueness",
    "C8": "Performance",
    "C9": "Automation",
    "C10": "Observability",
    "C11": "Delivery",
    "C12": "Rollback",
}

# Per control: enforcing entries in matrix order. Plain strings that are not
# registry ids are delegations to mechanisms outside this tool.
CONTROL_MAP: dict[str, tuple[str, ...]] = {
    "C1": ("check_branch_freshness", "check_freeze_schedule"),
    "C2": ("check_sql_lint", "check_naming_convention"),
    "C3": ("check_documentation", "check_tags"),
    "C4": ("check_owner", "check_path_permissions"),
    "C5": ("check_configured_test", "check_test_run"),
    "C6": (
        "check_ast_parse",
        "check_compilation",
        "check_column_usage",
        "check_dead_code",
        "check_model_length",
        "check_model_functions",
        "check_model_compliance",
        "check_materialization",
        "check_model_dependencies",
        "check_configuration",
    ),
    "C7": ("check_vector_similarity",),
    "C8": ("check_runtime_threshold",),
    "C9": ("CI auto-trigger on commit", "check_ai_feedback"),
    "C10": ("run_documentation", "HTML for dbtDocs"),
    "C11": ("run_production",),
    "C12": ("Git revert workflow",),
}

# delegations that are always in force: the exit-code contract is what a CI
# system triggers on; rollback is plain `git revert`
STANDING_DELEGATIONS = {"CI auto-trigger on commit", "Git revert workflow"}


@dataclass(frozen=True)
class CheckDescriptor:
    id: str
    job: str
    stage: str
    controls: frozenset[str]
    default_severity: str
    enabled: bool = True
    project_wide: bool = False


_CHECKS = (
    # id, job, stage, default severity, project-wide
    ("check_naming_convention", "J1.1", "lint", "error", False),
    ("check_sql_lint", "J1.2", "lint", "error", False),
    ("check_tags", "J1.3", "lint", "error", False),
    ("check_ai_feedback", "J2.1", "optimize", "advisory", False),
    ("check_vector_similarity", "J2.2", "optimize", "warning", False),
    ("check_ast_parse", "J3.1", "parse", "error", False),
    ("check_column_usage", "J3.2", "parse", "error", False),
    ("check_dead_code", "J3.3", "parse", "error", False),
    ("check_model_functions", "J3.4", "parse", "error", False),
    ("check_model_length", "J3.5", "parse", "error", False),
    ("check_branch_freshness", "J4.1", "validate", "error", True),
    ("check_compilation", "J4.2", "validate", "error", True),
    ("check_configuration", "J4.3", "validate", "error", False),
    ("check_documentation", "J4.4", "validate", "error", False),
    ("check_freeze_schedule", "J4.5", "validate", "error", True),
    ("check_materialization", "J4.6", "validate", "error", False),
    ("check_model_compliance", "J4.7", "validate", "error", False),
    ("check_model_dependencies", "J4.8", "validate", "error", True),
    ("check_owner", "J4.9", "validate", "error", False),
    ("check_path_permissions", "J4.10", "validate", "error", False),
    ("check_configured_test", "J5.1", "observe", "error", False),
    ("check_runtime_threshold", "J5.2", "observe", "error", False),
    ("check_test_run", "J5.3", "observe", "error", False),
    ("check_uat_run", "J5.4", "observe", "error", False),
    ("run_production", "DJ1.1", "deploy", "error", True),
    ("run_documentation", "DJ1.2", "deploy", "error", True),
)


# Checks the matrix leaves unmapped still tag their findings with the control
# they serve; the matrix rows themselves are not changed.
EXTRA_CONTROLS: dict[str, tuple[str, ...]] = {"check_uat_run": ("C5",)}


def _controls_of(check_id: str) -> frozenset[str]:
    mapped = {c for c, entries in CONTROL_MAP.items() if check_id in entries}
    return frozenset(mapped | set(EXTRA_CONTROLS.get(check_id, ())))


def builtin_registry() -> tuple[CheckDescriptor, ...]:
    return tuple(
        CheckDescriptor(cid, job, stage, _controls_of(cid), severity, project_wide=wide)
        for cid, job, stage, severity, wide in _CHECKS
    )


REGISTRY: dict[str, CheckDescriptor] = {d.id: d for d in builtin_registry()}


def stage_index(stage: str) -> int:
    return STAGES.index(stage)


def sort_controls(controls) -> list[str]:
    return sorted(controls, key=lambda c: int(c[1:]))
