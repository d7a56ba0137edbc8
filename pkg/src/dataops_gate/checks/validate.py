"""Validate stage: the ten governance gates run before a change may merge."""

from __future__ import annotations

import datetime as dt
import re
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional

from ..config import MATERIALIZATIONS, CompliancePolicy, FreezeWindow, PermissionMap, PipelineConfig
from ..findings import Finding, finding
from ..lineage import DependencyGraph, detect_cycles, layer_violations, unreferenced_models
from ..project import ModelUnit, ProjectSnapshot
from ..sql.ast import SqlAst


@dataclass(frozen=True)
class BranchStatus:
    behind_base: int
    base_branch: str = "main"

    def __post_init__(self) -> None:
        if self.behind_base < 0:
            raise ValueError("behind_base must be >= 0")


# -- J4.1 ---------------------------------------------------------------------


def check_branch_freshness(status: Optional[BranchStatus], cfg: PipelineConfig) -> list[Finding]:
    cid = "check_branch_freshness"
    if status is None:
        return [
            finding(
                cid,
                f"freshness unknown: could not compare against {cfg.vcs.base_branch}; pass --behind-base N",
                severity="warning",
            )
        ]
    limit = cfg.thresholds.max_behind
    if status.behind_base > limit:
        noun = "commit" if status.behind_base == 1 else "commits"
        return [
            finding(
                cid,
                f"branch is {status.behind_base} {noun} behind {status.base_branch} (max {limit}); rebase first",
            )
        ]
    return []


# -- J4.2 ---------------------------------------------------------------------


def check_compilation(
    snapshot: ProjectSnapshot,
    parse_errors: Mapping[str, str],
    unsupported: Mapping[str, int],
    broken_refs: Iterable[Finding],
) -> list[Finding]:
    """Whole-project gate: every model parses, resolves its refs and uses only supported macros."""
    cid = "check_compilation"
    out = []
    for name in sorted(parse_errors):
        out.append(finding(cid, f"project does not compile: {name} is unparseable ({parse_errors[name]})", name))
    for name in sorted(unsupported):
        count = unsupported[name]
        out.append(
            finding(cid, f"project does not compile: {name} has {count} unsupported macro region(s)", name)
        )
    for f in broken_refs:
        out.append(finding(cid, f"project does not compile: {f.message}", f.model, f.line, f.col))
    return out


# -- J4.3 ---------------------------------------------------------------------


def check_configuration(model: ModelUnit, cfg: PipelineConfig) -> list[Finding]:
    cid = "check_configuration"
    props = model.properties
    if props is None:
        return [finding(cid, "missing properties: no properties entry declares this model", model.name)]
    out = []
    for key in sorted(props.extra_keys):
        out.append(finding(cid, f"unsupported key {key!r}", model.name))
    for key in cfg.pipeline.required_property_keys:
        if key not in props.present_keys:
            out.append(finding(cid, f"missing required key {key!r}", model.name))
    if props.materialized is not None and props.materialized not in MATERIALIZATIONS:
        out.append(
            finding(
                cid,
                f"invalid materialized value {props.materialized!r} (expected one of {', '.join(MATERIALIZATIONS)})",
                model.name,
            )
        )
    return out


# -- J4.4 ---------------------------------------------------------------------


def check_documentation(model: ModelUnit, ast: Optional[SqlAst], cfg: PipelineConfig) -> list[Finding]:
    cid = "check_documentation"
    minimum = cfg.thresholds.min_description_chars
    props = model.properties
    text = (props.description or "").strip() if props else ""
    out = []
    if not text:
        out.append(finding(cid, "model has no description", model.name))
    elif len(text) < minimum:
        out.append(finding(cid, f"description is {len(text)} characters; at least {minimum} required", model.name))
    if cfg.pipeline.require_column_docs and ast is not None and ast.primary_select is not None:
        docs = props.columns if props else {}
        seen = set()
        for item in ast.primary_select.select_items:
            col = item.output_name
            if item.is_star or col is None or col in seen:
                continue
            seen.add(col)
            doc = docs.get(col)
            if doc is None or not doc.description.strip():
                out.append(finding(cid, f"column {col} is undocumented", model.name, item.line, item.col))
    return out


# -- J4.5 ---------------------------------------------------------------------


def check_freeze_schedule(now: dt.datetime, windows: Iterable[FreezeWindow]) -> list[Finding]:
    day = now.date()
    weekday = day.strftime("%A").lower()
    for window in windows:
        if weekday in window.weekdays or day in window.dates:
            when = day.isoformat() if day in window.dates else weekday.capitalize()
            return [finding("check_freeze_schedule", f"submissions are frozen on {when}: {window.reason}")]
    return []


# -- J4.6 ---------------------------------------------------------------------


def check_materialization(model: ModelUnit, cfg: PipelineConfig) -> list[Finding]:
    props = model.properties
    if props is None or props.materialized is None or props.materialized not in MATERIALIZATIONS:
        return []
    allowed = cfg.materialization.get(model.layer, frozenset(MATERIALIZATIONS))
    if props.materialized in allowed:
        return []
    return [
        finding(
            "check_materialization",
            f"materialized={props.materialized} is not allowed in the {model.layer} layer",
            model.name,
        )
    ]


# -- J4.7 ---------------------------------------------------------------------


def _approved(value: Optional[str]) -> bool:
    return value is not None and value.strip().lower() == "true"


def check_model_compliance(model: ModelUnit, ast: SqlAst, policy: CompliancePolicy) -> list[Finding]:
    """Output column names that look like sensitive data, unless explicitly approved."""
    props = model.properties
    key = policy.approval_meta_key
    if props is not None and _approved(props.meta.get(key)):
        return []
    patterns = policy.compiled()
    columns = props.columns if props else {}
    out = []
    seen = set()
    for stmt in ast.statements:
        for top in stmt.bodies():
            for item in top.deep_items():
                col = item.output_name
                if col is None or col.lower() in seen:
                    continue
                seen.add(col.lower())
                doc = columns.get(col)
                if doc is not None and _approved(doc.meta.get(key)):
                    continue
                for source, rx in patterns:
                    if rx.search(col):
                        out.append(
                            finding(
                                "check_model_compliance",
                                f"column {col} matches sensitive-data pattern /{source}/; "
                                f"mark it with meta {key}: true once approved",
                                model.name,
                                item.line,
                                item.col,
                            )
                        )
                        break
    return out


# -- J4.8 ---------------------------------------------------------------------


def check_model_dependencies(
    graph: DependencyGraph, broken_refs: Iterable[Finding], cfg: PipelineConfig
) -> list[Finding]:
    out = list(broken_refs)
    for cycle in detect_cycles(graph):
        chain = " -> ".join(n.name for n in cycle + [cycle[0]])
        out.append(finding("check_model_dependencies", f"dependency cycle: {chain}", cycle[0].name))
    out.extend(layer_violations(graph, cfg.lineage))
    out.extend(unreferenced_models(graph))
    return out


# -- J4.9 ---------------------------------------------------------------------


def check_owner(model: ModelUnit, snapshot: ProjectSnapshot) -> list[Finding]:
    owner = model.properties.owner if model.properties else None
    if not owner:
        return [finding("check_owner", "no designated owner", model.name)]
    if owner not in snapshot.owner_roster:
        return [finding("check_owner", f"owner {owner} is not active; assign a new owner", model.name)]
    return []


# -- J4.10 --------------------------------------------------------------------


def schema_glob(pattern: str) -> re.Pattern:
    """``*`` matches any run of non-dot characters; everything else is literal."""
    return re.compile("[^.]*".join(re.escape(part) for part in pattern.split("*")))


def check_path_permissions(
    model: ModelUnit, snapshot: ProjectSnapshot, perms: PermissionMap, as_user: Optional[str] = None
) -> list[Finding]:
    cid = "check_path_permissions"
    if not perms.teams:
        return []
    props = model.properties
    identity = as_user or (props.owner if props else None)
    team = snapshot.team_of_owner.get(identity) if identity else None
    if team is None:
        who = f"user {identity}" if identity else "the model owner"
        return [finding(cid, f"team unknown for {who}; cannot check schema permissions", model.name, severity="warning")]
    schema = (props.target_schema if props else None) or perms.default_schema
    globs = perms.teams.get(team, ())
    if any(schema_glob(g).fullmatch(schema) for g in globs):
        return []
    allowed = ", ".join(globs) if globs else "none"
    return [
        finding(cid, f"team {team} may not publish to schema {schema} (allowed: {allowed})", model.name)
    ]
