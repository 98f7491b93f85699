"""Deviation detection: evaluating graph nodes against compiled seed rules.

Change facts are derived solely from tool_call args and observation payloads:
a payload that starts with ``--- `` is treated as the unified diff a
write-class tool recorded, and an args key ``command`` marks an executed
shell command. Detection is a pure function; reports come out ordered by
(node seq, rule declaration order), one report at most per (node, rule) pair.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

from . import udiff
from .graph import CausalGraph, GraphNode
from .seeds import (
    CompiledSeeds,
    ForbidCommand,
    ForbidIntent,
    ForbidLayerEdge,
    ProtectRegion,
    RequireAction,
    normalize_path,
)
from .trace import ObservationBody, ReasoningBody, ToolCallBody, TraceEvent

DEFAULT_REVIEW_WINDOW = 50


@dataclass(frozen=True)
class FileChange:
    path: str
    layer: str | None
    added: tuple[str, ...]
    removed: tuple[str, ...]
    hunks: tuple[str, ...]


@dataclass(frozen=True)
class ChangeFacts:
    node_id: str
    files: tuple[FileChange, ...] = ()
    commands: tuple[str, ...] = ()
    unanalyzable: bool = False
    raw_payload: str = ""


@dataclass(frozen=True)
class Evidence:
    matched_text: str
    file_path: str | None = None
    command: str | None = None
    diff_hunk: str | None = None


@dataclass(frozen=True)
class DeviationReport:
    deviation_id: str
    session_id: str
    node_id: str
    rule_id: str
    category: str
    severity: str
    evidence: Evidence
    explanation: str


@dataclass(frozen=True)
class VelocityMetrics:
    nodes_per_review: float
    churn: float
    window: int


def extract_change_facts(
    node: GraphNode,
    events: Sequence[TraceEvent],
    seeds: CompiledSeeds,
) -> ChangeFacts:
    """Parse an action node's recorded effects into matchable facts.

    A malformed diff payload marks the node unanalyzable and keeps the raw
    payload for inspection instead of failing the session.
    """
    if node.kind != "action":
        return ChangeFacts(node.node_id)
    by_seq = {e.seq: e for e in events}
    call = by_seq[node.seq]
    assert isinstance(call.body, ToolCallBody)

    commands: list[str] = []
    cmd = call.body.args.get("command")
    if isinstance(cmd, str) and cmd:
        commands.append(cmd)

    payload = ""
    for s in node.seqs[1:]:
        obs = by_seq.get(s)
        if obs is not None and isinstance(obs.body, ObservationBody):
            payload = obs.body.payload

    files: list[FileChange] = []
    if udiff.looks_like_diff(payload):
        try:
            parsed = udiff.parse_diff(payload)
        except udiff.MalformedDiff:
            return ChangeFacts(node.node_id, commands=tuple(commands), unanalyzable=True, raw_payload=payload)
        for fd in parsed:
            added: list[str] = []
            removed: list[str] = []
            hunks: list[str] = []
            for h in fd.hunks:
                added.extend(h.added())
                removed.extend(h.removed())
                hunks.append(h.text())
            files.append(
                FileChange(
                    path=fd.path,
                    layer=seeds.classify_path(fd.path),
                    added=tuple(added),
                    removed=tuple(removed),
                    hunks=tuple(hunks),
                )
            )
    return ChangeFacts(node.node_id, files=tuple(files), commands=tuple(commands))


def _hunk_containing(fc: FileChange, line: str) -> str | None:
    for h in fc.hunks:
        if "\n+" + line in h or h.startswith("+" + line):
            return h
    return None


def detect(
    g: CausalGraph,
    facts: Mapping[str, ChangeFacts],
    seeds: CompiledSeeds,
    events: Sequence[TraceEvent] = (),
) -> tuple[DeviationReport, ...]:
    """Evaluate every (node, rule) pair and return ordered deviation reports."""
    by_seq = {e.seq: e for e in events}
    reports: list[DeviationReport] = []
    rules = seeds.rules

    # Pending require-action obligations resolved after the node sweep.
    last_touch: dict[str, tuple[GraphNode, str]] = {}  # rule_id -> (node, file path)
    tool_runs: dict[str, list[int]] = {}  # tool name -> tool_call seqs

    for node in g.nodes:
        f = facts.get(node.node_id, ChangeFacts(node.node_id))
        if node.kind == "action":
            ev = by_seq.get(node.seq)
            if ev is not None and isinstance(ev.body, ToolCallBody):
                tool_runs.setdefault(ev.body.tool, []).append(node.seq)
        for rule in rules:
            clause = rule.decl.clause
            evidence: Evidence | None = None
            if isinstance(clause, ForbidLayerEdge) and node.kind == "action" and not f.unanalyzable:
                evidence = _match_layer_edge(rule, f)
            elif isinstance(clause, ForbidCommand) and node.kind == "action":
                for cmd in f.commands:
                    m = rule.command_re.search(cmd)  # type: ignore[union-attr]
                    if m:
                        evidence = Evidence(matched_text=m.group(0), command=cmd)
                        break
            elif isinstance(clause, ProtectRegion) and node.kind == "action" and not f.unanalyzable:
                for fc in f.files:
                    p = normalize_path(fc.path)
                    if any(r.match(p) for r in rule.region_res):
                        evidence = Evidence(matched_text=fc.path, file_path=fc.path)
                        break
            elif isinstance(clause, ForbidIntent) and node.kind == "reasoning":
                ev = by_seq.get(node.seq)
                if ev is not None and isinstance(ev.body, ReasoningBody):
                    hit = sorted(set(clause.tags) & set(ev.body.intent_tags))
                    if hit and _intent_gate_open(clause, node, g, by_seq):
                        evidence = Evidence(matched_text=" ".join(hit), command=clause.when_tool)
            elif isinstance(clause, RequireAction) and node.kind == "action" and not f.unanalyzable:
                for fc in f.files:
                    if fc.layer == clause.if_layer_touched:
                        last_touch[rule.decl.rule_id] = (node, fc.path)
                        break
            if evidence is not None:
                reports.append(_report(g, node, rule.decl, evidence))

    for rule in rules:
        clause = rule.decl.clause
        if not isinstance(clause, RequireAction):
            continue
        touch = last_touch.get(rule.decl.rule_id)
        if touch is None:
            continue
        node, path = touch
        runs = tool_runs.get(clause.then_tool, [])
        if not any(seq > node.seq for seq in runs):
            evidence = Evidence(
                matched_text=f"layer '{clause.if_layer_touched}' touched without a later {clause.then_tool} run",
                file_path=path,
            )
            reports.append(_report(g, node, rule.decl, evidence))

    rule_order = {r.decl.rule_id: i for i, r in enumerate(rules)}
    reports.sort(key=lambda r: (g.node(r.node_id).seq, rule_order[r.rule_id]))
    return tuple(reports)


def _match_layer_edge(rule, f: ChangeFacts) -> Evidence | None:
    clause: ForbidLayerEdge = rule.decl.clause
    if clause.import_pattern is not None:
        for fc in f.files:
            if fc.layer != clause.from_layer:
                continue
            for line in fc.added:
                m = rule.import_re.search(line)
                if m:
                    return Evidence(
                        matched_text=line,
                        file_path=fc.path,
                        diff_hunk=_hunk_containing(fc, line),
                    )
    if clause.path_write:
        from_files = [fc for fc in f.files if fc.layer == clause.from_layer]
        to_files = [fc for fc in f.files if fc.layer == clause.to_layer]
        if from_files and to_files:
            return Evidence(matched_text=to_files[0].path, file_path=to_files[0].path)
    return None


def _intent_gate_open(clause: ForbidIntent, node: GraphNode, g: CausalGraph, by_seq) -> bool:
    if clause.when_tool is None:
        return True
    for n in g.nodes:
        if n.kind != "action":
            continue
        ev = by_seq.get(n.seq)
        if ev is None or not isinstance(ev.body, ToolCallBody):
            continue
        if ev.body.caused_by == node.seq and ev.body.tool == clause.when_tool:
            return True
    return False


def _report(g: CausalGraph, node: GraphNode, decl, evidence: Evidence) -> DeviationReport:
    explanation = f"{decl.rationale or decl.rule_id} — at {node.kind} {node.node_id}: {node.label}"
    return DeviationReport(
        deviation_id=f"{decl.rule_id}@{node.node_id}",
        session_id=g.session_id,
        node_id=node.node_id,
        rule_id=decl.rule_id,
        category=decl.category,
        severity=decl.severity,
        evidence=evidence,
        explanation=explanation,
    )


def velocity(
    g: CausalGraph,
    reviews: Sequence[TraceEvent],
    facts: Mapping[str, ChangeFacts] | None = None,
    window: int = DEFAULT_REVIEW_WINDOW,
) -> VelocityMetrics:
    """Reviewer-load metrics: nodes per review over a window, and line churn."""
    window_nodes = g.nodes[-window:] if window > 0 else g.nodes
    window_seqs = {s for n in window_nodes for s in n.seqs}
    n_reviews = 0
    for r in reviews:
        body = r.body
        if hasattr(body, "node_ref") and body.node_ref in window_seqs:
            n_reviews += 1
    nodes_per_review = len(window_nodes) / max(1, n_reviews)

    added_pool: dict[str, int] = {}
    total_added = 0
    churned = 0
    if facts:
        for node in g.nodes:  # seq order = chronological
            f = facts.get(node.node_id)
            if f is None or f.unanalyzable:
                continue
            for fc in f.files:
                for line in fc.removed:
                    if added_pool.get(line, 0) > 0:
                        added_pool[line] -= 1
                        churned += 1
                for line in fc.added:
                    added_pool[line] = added_pool.get(line, 0) + 1
                    total_added += 1
    churn = churned / total_added if total_added else 0.0
    return VelocityMetrics(nodes_per_review=nodes_per_review, churn=churn, window=window)


def serialize_reports(reports: Sequence[DeviationReport]) -> str:
    """Newline-delimited `.devl` form, one JSON record per report."""
    import json

    lines = []
    for r in reports:
        obj = {
            "deviation_id": r.deviation_id,
            "session": r.session_id,
            "node": r.node_id,
            "rule": r.rule_id,
            "category": r.category,
            "severity": r.severity,
            "evidence": {
                k: v
                for k, v in (
                    ("matched_text", r.evidence.matched_text),
                    ("file_path", r.evidence.file_path),
                    ("command", r.evidence.command),
                    ("diff_hunk", r.evidence.diff_hunk),
                )
                if v is not None
            },
            "explanation": r.explanation,
        }
        lines.append(json.dumps(obj, separators=(",", ":"), sort_keys=True))
    return "\n".join(lines) + "\n" if lines else ""
