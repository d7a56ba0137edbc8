"""Cross-model dependency DAG built from ref()/source() calls."""

from __future__ import annotations

import heapq
import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional

from .config import LineageRules
from .findings import Finding, finding
from .project import ProjectSnapshot
from .sql.ast import MacroRef

CHECK = "check_model_dependencies"
MAX_CYCLES = 1000


@dataclass(frozen=True, order=True)
class NodeId:
    kind: str  # "model" | "source"
    name: str  # model name, or "source_name.table_name"

    @property
    def id(self) -> str:
        return f"{self.kind}.{self.name}"

    @classmethod
    def model(cls, name: str) -> "NodeId":
        return cls("model", name)

    @classmethod
    def source(cls, source_name: str, table_name: str) -> "NodeId":
        return cls("source", f"{source_name}.{table_name}")


@dataclass(frozen=True)
class DependencyGraph:
    nodes: frozenset[NodeId] = frozenset()
    # (dependent, dependency)
    edges: frozenset[tuple[NodeId, NodeId]] = frozenset()
    layer_of: dict[NodeId, str] = field(default_factory=dict)
    # first ref() / source() site of each edge, as (line, col)
    edge_sites: dict[tuple[NodeId, NodeId], tuple[int, int]] = field(default_factory=dict)

    def dependencies(self, node: NodeId) -> list[NodeId]:
        return sorted(to for frm, to in self.edges if frm == node)

    def dependents(self, node: NodeId) -> list[NodeId]:
        return sorted(frm for frm, to in self.edges if to == node)

    def model_nodes(self) -> list[NodeId]:
        return sorted(n for n in self.nodes if n.kind == "model")

    def to_json(self) -> str:
        nodes = [
            {"id": n.id, "kind": n.kind, "layer": self.layer_of.get(n)}
            for n in sorted(self.nodes, key=lambda n: n.id)
        ]
        edges = [{"from": a.id, "to": b.id} for a, b in sorted(self.edges, key=lambda e: (e[0].id, e[1].id))]
        return json.dumps({"nodes": nodes, "edges": edges}, indent=2) + "\n"


class GraphCycleError(Exception):
    pass


def build_graph(
    snapshot: ProjectSnapshot, macro_refs: Mapping[str, Iterable[MacroRef]]
) -> tuple[DependencyGraph, list[Finding]]:
    """One node per model and declared source, one edge per distinct resolved reference.

    ``macro_refs`` maps model name to its ref()/source() calls.
    """
    models = {m.name: m for m in snapshot.models}
    declared = {(s.source_name, s.table_name) for s in snapshot.sources}
    nodes = {NodeId.model(n) for n in models} | {NodeId.source(*s) for s in declared}
    layer_of = {NodeId.model(n): m.layer for n, m in models.items()}
    edges: set[tuple[NodeId, NodeId]] = set()
    sites: dict[tuple[NodeId, NodeId], tuple[int, int]] = {}
    findings: list[Finding] = []
    for name in sorted(models):
        frm = NodeId.model(name)
        for ref in macro_refs.get(name, ()):
            if ref.kind == "ref":
                target = ref.args[0]
                if target not in models:
                    findings.append(
                        finding(CHECK, f"broken reference: ref('{target}') names no model", name, ref.line, ref.col)
                    )
                    continue
                to = NodeId.model(target)
            else:
                if tuple(ref.args) not in declared:
                    findings.append(
                        finding(
                            CHECK,
                            f"broken reference: source('{ref.args[0]}', '{ref.args[1]}') is not declared",
                            name,
                            ref.line,
                            ref.col,
                        )
                    )
                    continue
                to = NodeId.source(*ref.args)
            edges.add((frm, to))
            sites.setdefault((frm, to), (ref.line, ref.col))
    graph = DependencyGraph(frozenset(nodes), frozenset(edges), layer_of, sites)
    return graph, findings


def _adjacency(g: DependencyGraph) -> dict[NodeId, list[NodeId]]:
    adj: dict[NodeId, list[NodeId]] = {n: [] for n in g.nodes}
    for frm, to in g.edges:
        adj.setdefault(frm, []).append(to)
        adj.setdefault(to, [])
    for targets in adj.values():
        targets.sort()
    return adj


def _strongly_connected(adj: dict[NodeId, list[NodeId]]) -> list[list[NodeId]]:
    """Tarjan's algorithm, iterative so deep chains don't hit the recursion limit."""
    index: dict[NodeId, int] = {}
    low: dict[NodeId, int] = {}
    on_stack: set[NodeId] = set()
    stack: list[NodeId] = []
    out: list[list[NodeId]] = []
    counter = 0
    for root in sorted(adj):
        if root in index:
            continue
        work = [(root, 0)]
        while work:
            node, i = work.pop()
            if i == 0:
                index[node] = low[node] = counter
                counter += 1
                stack.append(node)
                on_stack.add(node)
            recurse = False
            for j in range(i, len(adj[node])):
                nxt = adj[node][j]
                if nxt not in index:
                    work.append((node, j + 1))
                    work.append((nxt, 0))
                    recurse = True
                    break
                if nxt in on_stack:
                    low[node] = min(low[node], index[nxt])
            if recurse:
                continue
            if low[node] == index[node]:
                comp = []
                while True:
                    member = stack.pop()
                    on_stack.discard(member)
                    comp.append(member)
                    if member == node:
                        break
                out.append(sorted(comp))
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[node])
    return out


def detect_cycles(g: DependencyGraph) -> list[list[NodeId]]:
    """Elementary cycles, each starting at its smallest node, in sorted order.

    Enumeration is confined to strongly connected components and capped at
    MAX_CYCLES per component, which keeps pathological graphs bounded while
    every component that contains a cycle is still reported.
    """
    adj = _adjacency(g)
    cycles: list[list[NodeId]] = []
    for comp in _strongly_connected(adj):
        members = set(comp)
        if len(comp) == 1 and comp[0] not in adj[comp[0]]:
            continue
        budget = len(cycles) + MAX_CYCLES
        for start in comp:
            # cycles through `start` using only members greater than it
            path = [start]
            stack = [iter(n for n in adj[start] if n in members and n >= start)]
            on_path = {start}
            while stack and len(cycles) < budget:
                nxt = next(stack[-1], None)
                if nxt is None:
                    stack.pop()
                    on_path.discard(path.pop())
                    continue
                if nxt == start:
                    cycles.append(list(path))
                elif nxt not in on_path:
                    path.append(nxt)
                    on_path.add(nxt)
                    stack.append(iter(n for n in adj[nxt] if n in members and n >= start))
    return sorted(cycles)


def _edge_rule(
    frm_layer: Optional[str], to: NodeId, to_layer: Optional[str], rules: LineageRules
) -> Optional[str]:
    if rules.other_layer_isolated and (frm_layer == "other" or to_layer == "other"):
        return "models outside staging/intermediate/marts may not take part in lineage"
    if to.kind == "source":
        if rules.sources_only_in_staging and frm_layer != "staging":
            return "non-staging model reads a source directly; go through a staging model"
        return None
    if rules.staging_sources_only and frm_layer == "staging":
        return "staging model depends on another model; staging may read sources only"
    if rules.no_marts_into_intermediate and frm_layer == "intermediate" and to_layer == "marts":
        return "marts feeding intermediate: an intermediate model depends on a marts model"
    return None


def layer_violations(g: DependencyGraph, rules: LineageRules = LineageRules()) -> list[Finding]:
    out = []
    for frm, to in sorted(g.edges):
        reason = _edge_rule(g.layer_of.get(frm), to, g.layer_of.get(to), rules)
        if reason:
            line, col = g.edge_sites.get((frm, to), (None, None))
            out.append(finding(CHECK, f"{reason} ({frm.name} -> {to.name})", frm.name, line, col))
    return out


def unreferenced_models(g: DependencyGraph) -> list[Finding]:
    targets = {to for _, to in g.edges}
    return [
        finding(CHECK, f"unreferenced model: nothing depends on {n.name}", n.name, severity="warning")
        for n in g.model_nodes()
        if g.layer_of.get(n) != "marts" and n not in targets
    ]


def transitive_dependents(g: DependencyGraph, roots: Iterable[NodeId]) -> set[NodeId]:
    reverse: dict[NodeId, list[NodeId]] = {}
    for frm, to in g.edges:
        reverse.setdefault(to, []).append(frm)
    seen = set(roots)
    queue = list(seen)
    while queue:
        node = queue.pop()
        for dep in reverse.get(node, ()):
            if dep not in seen:
                seen.add(dep)
                queue.append(dep)
    return seen


def topo_order(g: DependencyGraph, roots: Iterable[NodeId]) -> list[NodeId]:
    """Roots and everything downstream, dependencies first, ties broken by node order."""
    selected = transitive_dependents(g, roots)
    indegree = {n: 0 for n in selected}
    children: dict[NodeId, list[NodeId]] = {n: [] for n in selected}
    for frm, to in g.edges:
        if frm in selected and to in selected:
            indegree[frm] += 1
            children[to].append(frm)
    ready = [n for n, d in indegree.items() if d == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        node = heapq.heappop(ready)
        order.append(node)
        for child in children[node]:
            indegree[child] -= 1
            if indegree[child] == 0:
                heapq.heappush(ready, child)
    if len(order) != len(selected):
        stuck = sorted(n.name for n, d in indegree.items() if d > 0)
        raise GraphCycleError(f"dependency cycle among: {', '.join(stuck)}")
    return order
