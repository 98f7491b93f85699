"""End-to-end session analysis shared by the CLI and the HTTP service."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

from .cdi import CdiConfig, CdiReport, ChainTooShort, QuizSpec, compute_cdi, critical_set, make_quiz
from .deviation import (
    ChangeFacts,
    DeviationReport,
    VelocityMetrics,
    detect,
    extract_change_facts,
    velocity,
)
from .graph import CausalGraph, annotate_graph, build_graph
from .seeds import CompiledSeeds, SeedDocument, compile_seeds
from .trace import ReviewBody, SessionHeader, TraceEvent

SEVERITY_RANK = {"info": 0, "warn": 1, "block": 2}
CONFORMANCE_BY_RANK = {0: "clean", 1: "warn", 2: "block"}


@dataclass(frozen=True)
class SessionAnalysis:
    header: SessionHeader
    events: tuple[TraceEvent, ...]
    graph: CausalGraph  # annotated with layers and deviation ids
    facts: dict[str, ChangeFacts]
    reports: tuple[DeviationReport, ...]
    critical: frozenset[str]
    velocity: VelocityMetrics
    conformance: str  # clean | warn | block
    unanalyzable_nodes: tuple[str, ...]


def empty_seeds() -> CompiledSeeds:
    return compile_seeds(SeedDocument((), (), ()))


def analyze_session(
    header: SessionHeader,
    events: Sequence[TraceEvent],
    seeds: CompiledSeeds,
) -> SessionAnalysis:
    """Run graph building, fact extraction, and detection over one session."""
    graph = build_graph(header, tuple(events))
    facts: dict[str, ChangeFacts] = {}
    layers: dict[str, str] = {}
    for node in graph.nodes:
        f = extract_change_facts(node, tuple(events), seeds)
        facts[node.node_id] = f
        touched = sorted({fc.layer for fc in f.files if fc.layer is not None})
        if touched:
            layers[node.node_id] = touched[0]
    reports = detect(graph, facts, seeds, tuple(events))
    by_node: dict[str, list[str]] = {}
    for r in reports:
        by_node.setdefault(r.node_id, []).append(r.deviation_id)
    graph = annotate_graph(graph, layers=layers, deviations=by_node)
    critical = critical_set(graph, reports, facts, seeds)
    reviews = tuple(e for e in events if isinstance(e.body, ReviewBody))
    vel = velocity(graph, reviews, facts)
    rank = max((SEVERITY_RANK[r.severity] for r in reports), default=0)
    if reports and rank == 0:
        conformance = "clean"  # info findings are listed but do not taint the verdict
    else:
        conformance = CONFORMANCE_BY_RANK[rank]
    unanalyzable = tuple(n for n in sorted(facts) if facts[n].unanalyzable)
    return SessionAnalysis(
        header=header,
        events=tuple(events),
        graph=graph,
        facts=facts,
        reports=reports,
        critical=critical,
        velocity=vel,
        conformance=conformance,
        unanalyzable_nodes=unanalyzable,
    )


def session_quiz(analysis: SessionAnalysis, seed: int) -> QuizSpec | None:
    """The reconstruction quiz for a session, or None when no quiz is required."""
    try:
        return make_quiz(analysis.graph, seed)
    except ChainTooShort:
        return None


def session_cdi(analysis: SessionAnalysis, quiz_seed: int, config: CdiConfig = CdiConfig()) -> CdiReport:
    reviews = tuple(e for e in analysis.events if isinstance(e.body, ReviewBody))
    quiz = session_quiz(analysis, quiz_seed)
    return compute_cdi(analysis.critical, reviews, quiz, config, graph=analysis.graph)


def verdict_json(analysis: SessionAnalysis, cdi_report: CdiReport) -> str:
    counts = {"info": 0, "warn": 0, "block": 0}
    for r in analysis.reports:
        counts[r.severity] += 1
    obj = {
        "session": analysis.header.session_id,
        "conformance": analysis.conformance,
        "cdi_verdict": cdi_report.verdict,
        "cdi": cdi_report.cdi,
        "summary": {
            "events": len(analysis.events),
            "nodes": len(analysis.graph.nodes),
            "deviations": counts,
            "reviews": sum(1 for e in analysis.events if isinstance(e.body, ReviewBody)),
            "critical_nodes": len(analysis.critical),
            "unanalyzable_nodes": len(analysis.unanalyzable_nodes),
            "nodes_per_review": analysis.velocity.nodes_per_review,
            "churn": analysis.velocity.churn,
        },
    }
    return json.dumps(obj, separators=(",", ":"), sort_keys=True)
