"""Causal reasoning graph: an immutable DAG built from a validated session.

Every plan and reasoning event becomes a node; a tool_call fuses with its
observation into one action node. Edge kinds:

* ``refines`` — parent link (plan→reasoning or reasoning→reasoning)
* ``causes``  — caused_by link (plan/reasoning → action)
* ``informs`` — inferred: an action feeds the next reasoning whose parent
  chain passes through the event that caused the action

All references in a validated stream point backward, so the graph is acyclic
by construction and seq order is a topological order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Iterable, Mapping, Sequence

from .trace import (
    ObservationBody,
    PlanBody,
    ReasoningBody,
    SessionHeader,
    ToolCallBody,
    TraceEvent,
)

GRAPH_WIRE_VERSION = "g1"
LABEL_MAX = 120


class GraphError(Exception):
    pass


class EmptyGraph(GraphError):
    pass


class UnknownFormat(GraphError):
    pass


@dataclass(frozen=True)
class GraphNode:
    node_id: str
    kind: str  # plan | reasoning | action
    label: str
    seqs: tuple[int, ...]  # underlying event seqs; seqs[0] is the primary seq
    layer: str | None = None
    deviation_ids: tuple[str, ...] = ()

    @property
    def seq(self) -> int:
        return self.seqs[0]


@dataclass(frozen=True)
class GraphEdge:
    src: str
    dst: str
    kind: str  # refines | causes | informs


@dataclass(frozen=True)
class CausalGraph:
    session_id: str
    nodes: tuple[GraphNode, ...]  # in seq order
    edges: tuple[GraphEdge, ...]
    topo_order: tuple[str, ...]

    def node(self, node_id: str) -> GraphNode:
        for n in self.nodes:
            if n.node_id == node_id:
                return n
        raise KeyError(node_id)

    def node_for_seq(self, seq: int) -> GraphNode | None:
        """Resolve an event seq to the node containing it (action nodes span two)."""
        for n in self.nodes:
            if seq in n.seqs:
                return n
        return None


def node_id_for_seq(seq: int) -> str:
    return f"n{seq}"


def _label_for(e: TraceEvent) -> str:
    b = e.body
    if isinstance(b, PlanBody):
        text = "plan: " + b.goal
    elif isinstance(b, ReasoningBody):
        text = b.text
    elif isinstance(b, ToolCallBody):
        args = ",".join(f"{k}={_short(v)}" for k, v in sorted(b.args.items()))
        text = f"{b.tool}({args})"
    else:
        text = e.kind
    return text[:LABEL_MAX]


def _short(v: object) -> str:
    s = str(v).replace("\n", "\\n")
    return s if len(s) <= 24 else s[:21] + "..."


def build_graph(header: SessionHeader, events: Sequence[TraceEvent]) -> CausalGraph:
    """Build the session DAG from a stream that passed validate_stream."""
    nodes: list[GraphNode] = []
    edges: list[GraphEdge] = []
    parent_of: dict[int, int] = {}  # reasoning seq -> parent seq
    cause_of: dict[int, int] = {}  # action (tool_call) seq -> causing seq
    reasoning_seqs: list[int] = []
    action_anchor: dict[int, int] = {}  # tool_call seq -> last seq of the fused node

    for e in events:
        b = e.body
        if isinstance(b, PlanBody):
            nodes.append(GraphNode(node_id_for_seq(e.seq), "plan", _label_for(e), (e.seq,)))
        elif isinstance(b, ReasoningBody):
            nodes.append(GraphNode(node_id_for_seq(e.seq), "reasoning", _label_for(e), (e.seq,)))
            reasoning_seqs.append(e.seq)
            if b.parent is not None:
                parent_of[e.seq] = b.parent
                edges.append(GraphEdge(node_id_for_seq(b.parent), node_id_for_seq(e.seq), "refines"))
        elif isinstance(b, ToolCallBody):
            nodes.append(GraphNode(node_id_for_seq(e.seq), "action", _label_for(e), (e.seq,)))
            cause_of[e.seq] = b.caused_by
            action_anchor[e.seq] = e.seq
            edges.append(GraphEdge(node_id_for_seq(b.caused_by), node_id_for_seq(e.seq), "causes"))
        elif isinstance(b, ObservationBody):
            for i, n in enumerate(nodes):
                if n.node_id == node_id_for_seq(b.of):
                    nodes[i] = replace(n, seqs=(b.of, e.seq))
                    break
            action_anchor[b.of] = e.seq
        # review events never become nodes

    # informs: action -> first later reasoning whose parent chain reaches the cause
    for call_seq, cause in cause_of.items():
        anchor = action_anchor[call_seq]
        for r_seq in reasoning_seqs:
            if r_seq <= anchor:
                continue
            if _chain_contains(parent_of, r_seq, cause):
                edges.append(GraphEdge(node_id_for_seq(call_seq), node_id_for_seq(r_seq), "informs"))
                break

    nodes.sort(key=lambda n: n.seq)
    order = {n.node_id: n.seq for n in nodes}
    edges.sort(key=lambda e: (order[e.src], order[e.dst], e.kind))
    topo = tuple(n.node_id for n in nodes)
    return CausalGraph(header.session_id, tuple(nodes), tuple(edges), topo)


def _chain_contains(parent_of: Mapping[int, int], start: int, target: int) -> bool:
    seen = set()
    cur: int | None = start
    while cur is not None and cur not in seen:
        seen.add(cur)
        cur = parent_of.get(cur)
        if cur == target:
            return True
    return False


def principal_chain(g: CausalGraph) -> tuple[str, ...]:
    """The longest root-to-leaf path; ties resolved toward smaller seqs.

    Among all maximum-length paths the result is the lexicographically
    smallest by node seq, i.e. ties break on the smallest seq at the first
    divergence point.
    """
    if not g.nodes:
        raise EmptyGraph("cannot take the principal chain of an empty graph")
    succ: dict[str, list[GraphNode]] = {n.node_id: [] for n in g.nodes}
    indeg = {n.node_id: 0 for n in g.nodes}
    by_id = {n.node_id: n for n in g.nodes}
    for e in g.edges:
        succ[e.src].append(by_id[e.dst])
        indeg[e.dst] += 1

    # Longest path length from each node to a leaf, in reverse topo order.
    length: dict[str, int] = {}
    for n in reversed(g.nodes):
        nxt = succ[n.node_id]
        length[n.node_id] = 1 + max((length[m.node_id] for m in nxt), default=0)

    roots = [n for n in g.nodes if indeg[n.node_id] == 0]
    best = max(length[r.node_id] for r in roots)
    cur = min((r for r in roots if length[r.node_id] == best), key=lambda n: n.seq)
    chain = [cur.node_id]
    while True:
        nxt = [m for m in succ[cur.node_id] if length[m.node_id] == length[cur.node_id] - 1]
        if not nxt:
            break
        cur = min(nxt, key=lambda n: n.seq)
        chain.append(cur.node_id)
    return tuple(chain)


def annotate_graph(
    g: CausalGraph,
    layers: Mapping[str, str] | None = None,
    deviations: Mapping[str, Iterable[str]] | None = None,
) -> CausalGraph:
    """Return a new snapshot with layer and deviation annotations filled in."""
    layers = layers or {}
    deviations = deviations or {}
    nodes = tuple(
        replace(
            n,
            layer=layers.get(n.node_id, n.layer),
            deviation_ids=tuple(sorted(deviations.get(n.node_id, n.deviation_ids))),
        )
        for n in g.nodes
    )
    return CausalGraph(g.session_id, nodes, g.edges, g.topo_order)


def export_graph(g: CausalGraph, format: str) -> str:
    """Deterministic graph export: 'dot' for rendering, 'json' for the wire."""
    if format == "dot":
        return _export_dot(g)
    if format == "json":
        return _export_json(g)
    raise UnknownFormat(f"unknown export format: {format!r}")


def _dot_quote(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


_DOT_SHAPES = {"plan": "hexagon", "reasoning": "ellipse", "action": "box"}


def _export_dot(g: CausalGraph) -> str:
    lines = [f"digraph {_dot_quote(g.session_id)} {{", "  rankdir=LR;"]
    for n in g.nodes:
        attrs = [f"label={_dot_quote(n.label)}", f"shape={_DOT_SHAPES[n.kind]}"]
        if n.deviation_ids:
            attrs.append('class="deviation"')
            attrs.append("color=red")
            attrs.append("penwidth=2")
        lines.append(f"  {_dot_quote(n.node_id)} [{', '.join(attrs)}];")
    for e in g.edges:
        lines.append(f"  {_dot_quote(e.src)} -> {_dot_quote(e.dst)} [label={_dot_quote(e.kind)}];")
    lines.append("}")
    return "\n".join(lines) + "\n"


def _export_json(g: CausalGraph) -> str:
    obj = {
        "version": GRAPH_WIRE_VERSION,
        "session": g.session_id,
        "nodes": [
            {
                "id": n.node_id,
                "kind": n.kind,
                "label": n.label,
                "seqs": list(n.seqs),
                "layer": n.layer,
                "deviations": list(n.deviation_ids),
            }
            for n in g.nodes
        ],
        "edges": [{"from": e.src, "to": e.dst, "kind": e.kind} for e in g.edges],
        "topo": list(g.topo_order),
    }
    return json.dumps(obj, separators=(",", ":"), sort_keys=True)


def parse_graph_json(text: str) -> CausalGraph:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GraphError(f"bad graph JSON: {exc}") from exc
    if not isinstance(obj, dict) or obj.get("version") != GRAPH_WIRE_VERSION:
        raise UnknownFormat(f"expected graph wire version {GRAPH_WIRE_VERSION!r}")
    nodes = tuple(
        GraphNode(
            node_id=n["id"],
            kind=n["kind"],
            label=n["label"],
            seqs=tuple(n["seqs"]),
            layer=n.get("layer"),
            deviation_ids=tuple(n.get("deviations", ())),
        )
        for n in obj["nodes"]
    )
    edges = tuple(GraphEdge(e["from"], e["to"], e["kind"]) for e in obj["edges"])
    return CausalGraph(obj["session"], nodes, edges, tuple(obj["topo"]))
