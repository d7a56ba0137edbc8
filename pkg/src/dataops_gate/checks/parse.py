"""Parse stage: structural rules evaluated on each model's AST."""

from __future__ import annotations

from typing import Union

from ..config import PipelineConfig
from ..findings import Finding, finding
from ..lineage import DependencyGraph, NodeId
from ..project import ModelUnit
from ..sql.ast import SelectBody, SqlAst, Statement
from ..sql.lexer import SqlError


def check_ast_parse(model: ModelUnit, ast: Union[SqlAst, SqlError], cfg: PipelineConfig) -> list[Finding]:
    """Exactly one SELECT statement per file, supported macros only, optional complexity budgets.

    ``ast`` may be the error raised while lexing or parsing, which becomes a
    single "unparseable" finding.
    """
    cid = "check_ast_parse"
    name = model.name
    if isinstance(ast, SqlError):
        return [finding(cid, f"unparseable: {ast.message}", name, ast.line, ast.col)]
    out = []
    count = len(ast.statements)
    if count != 1:
        line = ast.statements[1].span[0] if count > 1 else None
        out.append(finding(cid, f"expected exactly one statement per model, found {count}", name, line))
    for stmt in ast.statements:
        if stmt.kind != "select":
            out.append(finding(cid, f"{stmt.kind} statement: models must be pure SELECT queries", name, stmt.span[0]))
    for tok in ast.unsupported_macros:
        snippet = " ".join(tok.text.split())
        if len(snippet) > 40:
            snippet = snippet[:37] + "..."
        out.append(finding(cid, f"unsupported macro {snippet}", name, tok.line, tok.col))
    out.extend(_budgets(model, ast, cfg))
    return out


def _budgets(model: ModelUnit, ast: SqlAst, cfg: PipelineConfig) -> list[Finding]:
    th = cfg.thresholds
    bodies = [b for stmt in ast.statements for top in stmt.bodies() for b in top.walk()]
    ctes = sum(len(stmt.ctes) for stmt in ast.statements) + sum(len(b.local_ctes) for b in bodies)
    subqueries = sum(b.subquery_count for stmt in ast.statements for b in stmt.bodies())
    arms = max((b.set_op_arms for b in bodies), default=1)
    out = []
    for label, value, limit in (
        ("CTE count", ctes, th.max_ctes),
        ("subquery count", subqueries, th.max_subqueries),
        ("set-operation arms", arms, th.max_union_arms),
    ):
        if limit is not None and value > limit:
            out.append(finding("check_ast_parse", f"{label} {value} > {limit}", model.name))
    return out


# -- CTE graph helpers ---------------------------------------------------------


def _cte_reads(body: SelectBody) -> set[str]:
    return {r.cte.lower() for r in body.deep_relations() if r.cte}


def reachable_ctes(stmt: Statement) -> set[str]:
    """Lowercased names of CTEs reachable backward from the final select."""
    by_name = {c.name.lower(): c for c in stmt.ctes}
    if stmt.final_select is None:
        return set()
    seen: set[str] = set()
    queue = sorted(_cte_reads(stmt.final_select))
    while queue:
        name = queue.pop()
        if name in seen or name not in by_name:
            continue
        seen.add(name)
        queue.extend(_cte_reads(by_name[name].body) - seen)
    return seen


def check_dead_code(model: ModelUnit, ast: SqlAst) -> list[Finding]:
    stmt = ast.single_select
    if stmt is None:
        return []
    live = reachable_ctes(stmt)
    return [
        finding(
            "check_dead_code",
            f"CTE {cte.name} (lines {cte.span[0]}-{cte.span[1]}) does not feed the final select",
            model.name,
            cte.line,
            cte.col,
        )
        for cte in stmt.ctes
        if cte.name.lower() not in live
    ]


def _aliases_for(body: SelectBody, cte: str) -> set[str]:
    names = {cte}
    for rel in body.deep_relations():
        if rel.cte and rel.cte.lower() == cte and rel.alias:
            names.add(rel.alias.lower())
    return names


def _uses(consumer: SelectBody, cte: str) -> tuple[bool, set[str]]:
    """(star-reads-everything, names used) of CTE ``cte`` inside ``consumer``."""
    aliases = _aliases_for(consumer, cte)
    reads = cte in _cte_reads(consumer)
    star = False
    for item in consumer.deep_items():
        if not item.is_star:
            continue
        if item.star_qualifier is None:
            star = star or reads
        elif item.star_qualifier.lower() in aliases:
            star = True
    names = set()
    for ref in consumer.deep_columns():
        if ref.qualifier is None or ref.qualifier.lower() in aliases:
            names.add(ref.name.lower())
    return star, names


def check_column_usage(model: ModelUnit, ast: SqlAst) -> list[Finding]:
    """Columns a CTE defines that no later CTE or the final select mentions."""
    stmt = ast.single_select
    if stmt is None:
        return []
    live = reachable_ctes(stmt)
    out = []
    for i, cte in enumerate(stmt.ctes):
        key = cte.name.lower()
        if key not in live:
            continue  # reported whole by the dead-code check
        consumers = [c.body for c in stmt.ctes[i + 1 :]]
        if stmt.final_select is not None:
            consumers.append(stmt.final_select)
        used: set[str] = set()
        everything = False
        for body in consumers:
            star, names = _uses(body, key)
            everything = everything or star
            used |= names
        if everything:
            continue
        for item in cte.body.select_items:
            col = item.output_name
            if item.is_star or col is None or col.lower() in used:
                continue
            out.append(
                finding(
                    "check_column_usage",
                    f"column {col} of CTE {cte.name} is never used downstream",
                    model.name,
                    item.line,
                    item.col,
                )
            )
    return out


def check_model_functions(model: ModelUnit, ast: SqlAst, graph: DependencyGraph) -> list[Finding]:
    """Staging reads sources only; other layers never call source(); one staging model per source."""
    cid = "check_model_functions"
    name = model.name
    out = []
    if model.layer == "staging":
        for ref in ast.macro_refs:
            if ref.kind == "ref":
                out.append(
                    finding(cid, f"staging model calls ref('{ref.args[0]}'); staging reads sources only", name, ref.line, ref.col)
                )
        for stmt in ast.statements:
            for top in stmt.bodies():
                for rel in top.deep_relations():
                    if rel.raw_table:
                        out.append(
                            finding(
                                cid,
                                f"staging model reads table {rel.raw_table} directly; declare it and use source()",
                                name,
                                rel.line,
                                rel.col,
                            )
                        )
        me = NodeId.model(name)
        for src in graph.dependencies(me):
            if src.kind != "source":
                continue
            earlier = [
                n.name
                for n in graph.dependents(src)
                if graph.layer_of.get(n) == "staging" and n.name < name
            ]
            if earlier:
                out.append(
                    finding(
                        cid,
                        f"source {src.name} is already staged by {earlier[0]}; stage each source once",
                        name,
                        *graph.edge_sites.get((me, src), (None, None)),
                    )
                )
    else:
        for ref in ast.macro_refs:
            if ref.kind == "source":
                out.append(
                    finding(
                        cid,
                        f"{model.layer} model calls source('{ref.args[0]}', '{ref.args[1]}'); read it through a staging model",
                        name,
                        ref.line,
                        ref.col,
                    )
                )
    return sorted(out, key=lambda f: (f.line or 0, f.col or 0, f.message))


def check_model_length(model: ModelUnit, cfg: PipelineConfig) -> list[Finding]:
    limit = cfg.thresholds.max_model_lines
    if model.line_count > limit:
        return [finding("check_model_length", f"model is too long: {model.line_count} > {limit} lines", model.name)]
    return []

