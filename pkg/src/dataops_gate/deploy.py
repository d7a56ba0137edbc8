"""Delivery jobs: the production run plan and the static HTML data dictionary."""

from __future__ import annotations

import html
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from .lineage import DependencyGraph, GraphCycleError, NodeId, detect_cycles, topo_order
from .project import ModelUnit, ProjectSnapshot


@dataclass(frozen=True)
class PlanStep:
    model: str
    action: str  # run | skip
    reason: str


@dataclass(frozen=True)
class DeployPlan:
    steps: tuple[PlanStep, ...] = ()

    def to_json(self) -> str:
        steps = [{"model": s.model, "action": s.action, "reason": s.reason} for s in self.steps]
        return json.dumps({"steps": steps}, indent=2) + "\n"


def plan_production(changed: Iterable[str], graph: DependencyGraph, full_plan: bool = False) -> DeployPlan:
    """Changed models and everything downstream, dependencies first. Never executed."""
    changed = set(changed)
    known = {n.name for n in graph.model_nodes()}
    missing = sorted(changed - known)
    if missing:
        raise KeyError(f"unknown model(s): {', '.join(missing)}")
    cycles = detect_cycles(graph)
    if cycles:
        chain = " -> ".join(n.name for n in cycles[0] + [cycles[0][0]])
        raise GraphCycleError(f"refusing to plan a cyclic graph: {chain}")
    roots = [NodeId.model(n) for n in sorted(changed)]
    affected = topo_order(graph, roots)
    affected_set = set(affected)
    order = topo_order(graph, graph.model_nodes()) if full_plan else affected
    steps = []
    for node in order:
        if node.kind != "model":
            continue
        if node.name in changed:
            steps.append(PlanStep(node.name, "run", "changed"))
        elif node in affected_set:
            upstream = [d.name for d in graph.dependencies(node) if d in affected_set]
            steps.append(PlanStep(node.name, "run", f"downstream of {', '.join(upstream)}"))
        else:
            steps.append(PlanStep(node.name, "skip", "not affected"))
    return DeployPlan(tuple(steps))


# -- data dictionary ----------------------------------------------------------

_CSS = """
body { font-family: sans-serif; margin: 2em; color: #222; }
table { border-collapse: collapse; }
th, td { border: 1px solid #ccc; padding: 4px 8px; text-align: left; vertical-align: top; }
th { background: #f3f3f3; }
code { background: #f6f6f6; }
"""


def _page(title: str, body: str) -> str:
    return (
        "<!DOCTYPE html>\n"
        '<html lang="en">\n<head>\n<meta charset="utf-8">\n'
        f"<title>{html.escape(title)}</title>\n<style>{_CSS}</style>\n</head>\n"
        f"<body>\n{body}</body>\n</html>\n"
    )


def _e(value) -> str:
    return html.escape("" if value is None else str(value))


def _model_link(name: str, prefix: str = "") -> str:
    return f'<a href="{prefix}{_e(name)}.html">{_e(name)}</a>'


def _index(snapshot: ProjectSnapshot) -> str:
    rows = []
    for m in sorted(snapshot.models, key=lambda m: m.name):
        p = m.properties
        rows.append(
            "<tr>"
            f"<td>{_model_link(m.name, 'models/')}</td>"
            f"<td>{_e(m.layer)}</td>"
            f"<td>{_e(p.owner if p else '')}</td>"
            f"<td>{_e(', '.join(sorted(p.tags)) if p else '')}</td>"
            f"<td>{_e(p.materialized if p else '')}</td>"
            f"<td>{_e(p.description if p else '')}</td>"
            "</tr>\n"
        )
    table = (
        "<table>\n<tr><th>Model</th><th>Layer</th><th>Owner</th><th>Tags</th>"
        "<th>Materialization</th><th>Description</th></tr>\n" + "".join(rows) + "</table>\n"
    )
    return _page("Data dictionary", f"<h1>Data dictionary</h1>\n<p>{len(rows)} model(s)</p>\n{table}")


def _neighbors(nodes: list[NodeId]) -> str:
    if not nodes:
        return "<p>none</p>\n"
    items = []
    for n in nodes:
        items.append(f"<li>{_model_link(n.name)}</li>" if n.kind == "model" else f"<li>source <code>{_e(n.name)}</code></li>")
    return "<ul>\n" + "\n".join(items) + "\n</ul>\n"


def _model_page(m: ModelUnit, graph: DependencyGraph) -> str:
    p = m.properties
    node = NodeId.model(m.name)
    parts = [f'<p><a href="../index.html">index</a></p>\n<h1>{_e(m.name)}</h1>\n']
    parts.append(f"<p>{_e(p.description if p else 'No description.')}</p>\n")
    facts = [
        ("Path", m.path),
        ("Layer", m.layer),
        ("Owner", p.owner if p else None),
        ("Materialization", p.materialized if p else None),
        ("Target schema", p.target_schema if p else None),
        ("Tags", ", ".join(sorted(p.tags)) if p else None),
    ]
    parts.append(
        "<table>\n" + "".join(f"<tr><th>{k}</th><td>{_e(v)}</td></tr>\n" for k, v in facts) + "</table>\n"
    )
    parts.append("<h2>Columns</h2>\n")
    columns = p.columns if p else {}
    if columns:
        rows = []
        for cname in sorted(columns):
            tests = ", ".join(t.test_type for t in (p.tests if p else ()) if t.column == cname)
            rows.append(f"<tr><td>{_e(cname)}</td><td>{_e(columns[cname].description)}</td><td>{_e(tests)}</td></tr>\n")
        parts.append("<table>\n<tr><th>Column</th><th>Description</th><th>Tests</th></tr>\n" + "".join(rows) + "</table>\n")
    else:
        parts.append("<p>none documented</p>\n")
    parts.append("<h2>Tests</h2>\n")
    tests = p.tests if p else ()
    if tests:
        parts.append("<ul>\n" + "\n".join(f"<li>{_e(t.label())}</li>" for t in tests) + "\n</ul>\n")
    else:
        parts.append("<p>none declared</p>\n")
    parts.append("<h2>Upstream</h2>\n" + _neighbors(graph.dependencies(node)))
    parts.append("<h2>Downstream</h2>\n" + _neighbors(graph.dependents(node)))
    return _page(m.name, "".join(parts))


def run_documentation(snapshot: ProjectSnapshot, graph: DependencyGraph, out_dir: Path) -> list[Path]:
    """Write index.html plus models/<name>.html; returns the written paths in order."""
    out_dir = Path(out_dir)
    (out_dir / "models").mkdir(parents=True, exist_ok=True)
    pages = [(out_dir / "index.html", _index(snapshot))]
    for m in sorted(snapshot.models, key=lambda m: m.name):
        pages.append((out_dir / "models" / f"{m.name}.html", _model_page(m, graph)))
    for path, text in pages:
        path.write_bytes(text.encode("utf-8"))
    return [path for path, _ in pages]
