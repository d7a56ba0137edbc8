"""Stage orchestration: run enabled checks lint -> optimize -> parse -> validate -> observe."""

from __future__ import annotations

import dataclasses
import datetime as dt
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Optional

from .checks import lint, observe, optimize, parse, validate
from .checks.observe import RunRecord
from .checks.validate import BranchStatus
from .findings import Finding, finding, sort_findings
from .lineage import DependencyGraph, build_graph
from .project import ModelUnit, ProjectSnapshot
from .registry import GATE_STAGES, REGISTRY, SEVERITIES, sort_controls
from .sql.ast import MacroRef, SqlAst
from .sql.lexer import LexError, SqlError, Token, tokenize
from .sql.parser import parse_tokens, scan_macros

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ParsedModel:
    ast: Optional[SqlAst] = None
    error: Optional[SqlError] = None
    macro_refs: tuple[MacroRef, ...] = ()
    unsupported: tuple[Token, ...] = ()

    @property
    def result(self):
        return self.error if self.error is not None else self.ast


def parse_unit(model: ModelUnit) -> ParsedModel:
    """Parse one model, keeping its macro calls even when the SELECT is malformed."""
    try:
        tokens = tokenize(model.raw_sql)
    except LexError as exc:
        return ParsedModel(error=exc)
    refs, unsupported = scan_macros(tokens)
    try:
        ast = parse_tokens(tokens)
    except SqlError as exc:
        return ParsedModel(error=exc, macro_refs=refs, unsupported=unsupported)
    return ParsedModel(ast=ast, macro_refs=refs, unsupported=unsupported)


def parse_all(snapshot: ProjectSnapshot) -> dict[str, ParsedModel]:
    return {m.name: parse_unit(m) for m in snapshot.models}


def project_graph(snapshot: ProjectSnapshot, parsed: Mapping[str, ParsedModel]) -> tuple[DependencyGraph, list[Finding]]:
    return build_graph(snapshot, {name: p.macro_refs for name, p in parsed.items()})


@dataclass(frozen=True)
class GateInputs:
    """Ambient state, injected so every run is reproducible."""

    now: dt.datetime
    branch: Optional[BranchStatus] = None
    run_records: Mapping[str, RunRecord] = field(default_factory=dict)
    run_records_error: Optional[str] = None
    as_user: Optional[str] = None


@dataclass(frozen=True)
class StageSummary:
    stage: str
    status: str  # passed | failed | skipped
    counts: dict[str, int]


@dataclass(frozen=True)
class PipelineResult:
    findings: tuple[Finding, ...]
    stages: tuple[StageSummary, ...]
    internal_errors: int = 0

    def summary(self) -> dict:
        per_severity = {sev: 0 for sev in SEVERITIES}
        for f in self.findings:
            per_severity[f.severity] += 1
        return {
            "per_stage": {s.stage: {"status": s.status, **s.counts} for s in self.stages},
            "per_severity": per_severity,
        }


Task = tuple[str, Optional[str], Callable[[], list[Finding]]]


@dataclass
class _Context:
    snapshot: ProjectSnapshot
    parsed: Mapping[str, ParsedModel]
    graph: DependencyGraph
    broken_refs: list[Finding]
    targets: list[ModelUnit]
    io: GateInputs

    @property
    def cfg(self):
        return self.snapshot.config


def _lint_tasks(ctx: _Context) -> list[Task]:
    cfg = ctx.cfg
    tasks: list[Task] = []
    for m in ctx.targets:
        ast = ctx.parsed[m.name].ast
        tasks.append(("check_naming_convention", m.name, lambda m=m, ast=ast: lint.check_naming_convention(m, ast)))
        tasks.append(("check_sql_lint", m.name, lambda m=m: lint.check_sql_lint(m, cfg.lint)))
        tasks.append(("check_tags", m.name, lambda m=m: lint.check_tags(m, cfg)))
    return tasks


def _optimize_tasks(ctx: _Context) -> list[Task]:
    cfg = ctx.cfg
    names = [m.name for m in ctx.targets]
    tasks: list[Task] = [
        (
            "check_vector_similarity",
            None,
            lambda: optimize.check_vector_similarity(names, ctx.snapshot, cfg),
        )
    ]
    root = ctx.snapshot.root_path

    def advise() -> list[Finding]:
        # sequential on purpose: external advisors are often rate limited
        out: list[Finding] = []
        for m in ctx.targets:
            out.extend(optimize.check_ai_feedback(m, cfg, root)[1])
        return out

    tasks.append(("check_ai_feedback", None, advise))
    return tasks


def _parse_tasks(ctx: _Context) -> list[Task]:
    cfg = ctx.cfg
    tasks: list[Task] = []
    for m in ctx.targets:
        p = ctx.parsed[m.name]
        tasks.append(("check_ast_parse", m.name, lambda m=m, p=p: parse.check_ast_parse(m, p.result, cfg)))
        if p.ast is not None:
            ast = p.ast
            tasks.append(("check_column_usage", m.name, lambda m=m, ast=ast: parse.check_column_usage(m, ast)))
            tasks.append(("check_dead_code", m.name, lambda m=m, ast=ast: parse.check_dead_code(m, ast)))
            tasks.append(
                ("check_model_functions", m.name, lambda m=m, ast=ast: parse.check_model_functions(m, ast, ctx.graph))
            )
        tasks.append(("check_model_length", m.name, lambda m=m: parse.check_model_length(m, cfg)))
    return tasks


def _validate_tasks(ctx: _Context) -> list[Task]:
    cfg, snap, io = ctx.cfg, ctx.snapshot, ctx.io
    parse_errors = {n: p.error.message for n, p in ctx.parsed.items() if p.error is not None}
    unsupported = {n: len(p.unsupported) for n, p in ctx.parsed.items() if p.unsupported}
    tasks: list[Task] = [
        ("check_branch_freshness", None, lambda: validate.check_branch_freshness(io.branch, cfg)),
        (
            "check_compilation",
            None,
            lambda: validate.check_compilation(snap, parse_errors, unsupported, ctx.broken_refs),
        ),
        ("check_freeze_schedule", None, lambda: validate.check_freeze_schedule(io.now, cfg.freeze)),
        (
            "check_model_dependencies",
            None,
            lambda: validate.check_model_dependencies(ctx.graph, ctx.broken_refs, cfg),
        ),
    ]
    for m in ctx.targets:
        ast = ctx.parsed[m.name].ast
        tasks.append(("check_configuration", m.name, lambda m=m: validate.check_configuration(m, cfg)))
        tasks.append(("check_documentation", m.name, lambda m=m, ast=ast: validate.check_documentation(m, ast, cfg)))
        tasks.append(("check_materialization", m.name, lambda m=m: validate.check_materialization(m, cfg)))
        if ast is not None:
            tasks.append(
                (
                    "check_model_compliance",
                    m.name,
                    lambda m=m, ast=ast: validate.check_model_compliance(m, ast, cfg.compliance),
                )
            )
        tasks.append(("check_owner", m.name, lambda m=m: validate.check_owner(m, snap)))
        tasks.append(
            (
                "check_path_permissions",
                m.name,
                lambda m=m: validate.check_path_permissions(m, snap, cfg.permissions, io.as_user),
            )
        )
    return tasks


def _observe_tasks(ctx: _Context) -> list[Task]:
    cfg, io = ctx.cfg, ctx.io
    tasks: list[Task] = []
    if io.run_records_error:
        msg = f"run records unavailable: {io.run_records_error}"
        tasks.append(("check_test_run", None, lambda: [finding("check_test_run", msg)]))
    for m in ctx.targets:
        rec = io.run_records.get(m.name)
        tasks.append(("check_configured_test", m.name, lambda m=m: observe.check_configured_test(m, cfg)))
        tasks.append(
            ("check_runtime_threshold", m.name, lambda m=m, rec=rec: observe.check_runtime_threshold(m, rec, cfg))
        )
        tasks.append(("check_test_run", m.name, lambda m=m, rec=rec: observe.check_test_run(m, rec)))
        tasks.append(("check_uat_run", m.name, lambda m=m, rec=rec: observe.check_uat_run(m, rec)))
    return tasks


_STAGE_TASKS = {
    "lint": _lint_tasks,
    "optimize": _optimize_tasks,
    "parse": _parse_tasks,
    "validate": _validate_tasks,
    "observe": _observe_tasks,
}


def _apply_severity(cfg, f: Finding) -> Finding:
    """Config overrides retier a check's default-severity findings; degraded-mode tiers stay."""
    setting = cfg.checks.get(f.check_id)
    if setting and setting.severity and f.severity == REGISTRY[f.check_id].default_severity:
        return dataclasses.replace(f, severity=setting.severity)
    return f


def _run_task(task: Task) -> tuple[list[Finding], bool]:
    check_id, model, fn = task
    try:
        return list(fn()), False
    except Exception as exc:  # an internal failure must surface, never vanish
        log.exception("internal error in %s", check_id)
        return [
            Finding(
                check_id,
                "error",
                f"internal error: {type(exc).__name__}: {exc}",
                model,
                controls=tuple(sort_controls(REGISTRY[check_id].controls)),
            )
        ], True


def run_pipeline(
    snapshot: ProjectSnapshot,
    io: GateInputs,
    targets: Optional[Iterable[str]] = None,
    stages: Optional[Iterable[str]] = None,
    fail_fast: Optional[bool] = None,
    jobs: int = 1,
    parsed: Optional[Mapping[str, ParsedModel]] = None,
) -> PipelineResult:
    """Run the gate. ``targets`` limits per-model checks; project-wide checks always see everything."""
    cfg = snapshot.config
    if fail_fast is None:
        fail_fast = cfg.pipeline.fail_fast
    wanted = set(GATE_STAGES if stages is None else stages)
    unknown = wanted - set(GATE_STAGES)
    if unknown:
        raise ValueError(f"unknown stage(s): {', '.join(sorted(unknown))}")
    if parsed is None:
        parsed = parse_all(snapshot)
    graph, broken = project_graph(snapshot, parsed)
    if targets is None:
        target_models = list(snapshot.models)
    else:
        names = set(targets)
        target_models = [m for m in snapshot.models if m.name in names]
    ctx = _Context(snapshot, parsed, graph, broken, target_models, io)

    findings: list[Finding] = []
    summaries: list[StageSummary] = []
    internal = 0
    halted = False
    for stage in GATE_STAGES:
        zero = {sev: 0 for sev in SEVERITIES}
        if halted or stage not in wanted:
            summaries.append(StageSummary(stage, "skipped", zero))
            continue
        tasks = [t for t in _STAGE_TASKS[stage](ctx) if cfg.is_enabled(t[0])]
        if jobs > 1 and len(tasks) > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                results = list(pool.map(_run_task, tasks))
        else:
            results = [_run_task(t) for t in tasks]
        stage_findings = []
        for found, failed in results:
            internal += failed
            stage_findings.extend(_apply_severity(cfg, f) for f in found)
        counts = dict(zero)
        for f in stage_findings:
            counts[f.severity] += 1
        status = "failed" if counts["error"] else "passed"
        summaries.append(StageSummary(stage, status, counts))
        findings.extend(stage_findings)
        if fail_fast and counts["error"]:
            halted = True
    return PipelineResult(tuple(sort_findings(findings)), tuple(summaries), internal)


def exit_code(result: PipelineResult) -> int:
    """0 clean, 1 blocking findings, 3 internal failure. (2 is reserved for usage errors.)"""
    if result.internal_errors:
        return 3
    if any(f.severity == "error" for f in result.findings):
        return 1
    return 0
