from __future__ import annotations

import random

import pytest
from gen import random_stream
from oracles import brute_edges, brute_principal_chain

from sentinel.graph import (
    EmptyGraph,
    UnknownFormat,
    annotate_graph,
    build_graph,
    export_graph,
    parse_graph_json,
    principal_chain,
)
from sentinel.trace import SessionHeader


def test_fixture_graph_shape(fixture_analysis):
    g = fixture_analysis.graph
    assert len(g.nodes) == 7
    kinds = [n.kind for n in g.nodes]
    assert kinds.count("plan") == 1
    assert kinds.count("reasoning") == 3
    assert kinds.count("action") == 3


def test_fixture_principal_chain_is_four_steps(fixture_analysis):
    chain = principal_chain(fixture_analysis.graph)
    assert len(chain) == 4
    third = fixture_analysis.graph.node(chain[2])
    assert third.kind == "action"
    assert "apply_patch" in third.label


def test_header_only_stream_yields_empty_graph():
    header = SessionHeader("s0", 1, (), "t", "2026-01-05T12:00:00.000Z")
    g = build_graph(header, ())
    assert g.nodes == () and g.edges == ()
    with pytest.raises(EmptyGraph):
        principal_chain(g)
    assert "digraph" in export_graph(g, "dot")
    assert parse_graph_json(export_graph(g, "json")) == g


def test_single_node_graph_chain():
    rng = random.Random(1)
    header, events, _, _ = random_stream(rng, max_events=1, with_reviews=False)
    g = build_graph(header, events)
    assert principal_chain(g) == (g.nodes[0].node_id,)


def test_edges_match_quadratic_oracle_on_random_streams():
    rng = random.Random(42)
    for _ in range(100):
        header, events, _, _ = random_stream(rng, max_events=20)
        g = build_graph(header, events)
        got = {(e.src, e.dst, e.kind) for e in g.edges}
        assert got == brute_edges(list(events))


def test_node_conservation_and_acyclicity():
    rng = random.Random(43)
    for _ in range(100):
        header, events, _, _ = random_stream(rng, max_events=20)
        g = build_graph(header, events)
        expected = sum(1 for e in events if e.kind in ("plan", "reasoning", "tool_call"))
        assert len(g.nodes) == expected
        pos = {nid: i for i, nid in enumerate(g.topo_order)}
        for e in g.edges:
            assert pos[e.src] < pos[e.dst]  # all edges point forward: acyclic


def test_principal_chain_matches_exhaustive_enumeration():
    rng = random.Random(44)
    checked = 0
    while checked < 120:
        header, events, _, _ = random_stream(rng, max_events=12, with_reviews=False)
        g = build_graph(header, events)
        if not g.nodes or len(g.nodes) > 12:
            continue
        nodes = [(n.node_id, n.seq) for n in g.nodes]
        edges = {(e.src, e.dst, e.kind) for e in g.edges}
        assert principal_chain(g) == brute_principal_chain(nodes, edges)
        checked += 1


def test_exports_are_deterministic():
    rng1, rng2 = random.Random(9), random.Random(9)
    h1, e1, _, _ = random_stream(rng1, max_events=15)
    h2, e2, _, _ = random_stream(rng2, max_events=15)
    g1, g2 = build_graph(h1, e1), build_graph(h2, e2)
    assert export_graph(g1, "json") == export_graph(g2, "json")
    assert export_graph(g1, "dot") == export_graph(g2, "dot")


def test_unknown_format_rejected(fixture_analysis):
    with pytest.raises(UnknownFormat):
        export_graph(fixture_analysis.graph, "svg")


def test_dot_styles_exactly_the_deviation_nodes(fixture_analysis):
    dot = export_graph(fixture_analysis.graph, "dot")
    assert dot.count('class="deviation"') == 1
    flagged = [n for n in fixture_analysis.graph.nodes if n.deviation_ids]
    assert len(flagged) == 1 and flagged[0].kind == "action"


def test_json_round_trip_preserves_annotations(fixture_analysis):
    g = fixture_analysis.graph
    assert parse_graph_json(export_graph(g, "json")) == g
    extra = annotate_graph(g, layers={"n2": "controller"})
    assert parse_graph_json(export_graph(extra, "json")) == extra


def test_action_nodes_fuse_their_observation(fixture_analysis):
    g = fixture_analysis.graph
    actions = [n for n in g.nodes if n.kind == "action"]
    for n in actions:
        assert len(n.seqs) == 2
        assert g.node_for_seq(n.seqs[1]) is n
