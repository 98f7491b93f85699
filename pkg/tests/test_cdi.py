from __future__ import annotations

import random

import pytest
from gen import random_cdi_scenario
from oracles import cdi_formula

from sentinel.cdi import (
    BadWeights,
    CdiConfig,
    CdiReport,
    ChainTooShort,
    InsufficientHistory,
    UnknownNodeRef,
    cdi_trend,
    compute_cdi,
    critical_set,
    make_quiz,
)
from sentinel.graph import build_graph, principal_chain
from sentinel.pipeline import analyze_session, session_cdi
from sentinel.seeds import load_seeds
from sentinel.trace import QuizAnswer, ReasoningBody, ReviewBody, SessionHeader, TraceEvent

TS = "2026-01-05T12:00:00.000Z"


def _review(seq, node_ref, action="viewed", dwell=None, quiz=None, session="s1"):
    return TraceEvent(session, seq, TS, "review", ReviewBody("r", node_ref, action, dwell, quiz))


def test_fixture_quiz_truths_match_chain_order(fixture_analysis):
    g = fixture_analysis.graph
    chain = principal_chain(g)
    quiz = make_quiz(g, rng_seed=7)
    assert len(quiz.questions) == 3
    pos = {nid: i for i, nid in enumerate(chain)}
    for q in quiz.questions:
        assert q.kind == "edge_question"
        assert {q.node_a, q.node_b} <= set(chain)
        assert q.truth == (pos[q.node_a] < pos[q.node_b])  # independent re-check


def test_quiz_is_deterministic_per_seed(fixture_analysis):
    g = fixture_analysis.graph
    assert make_quiz(g, 7) == make_quiz(g, 7)
    assert make_quiz(g, 7) != make_quiz(g, 8)


def test_quiz_rejects_short_chains():
    header = SessionHeader("s1", 1, (), "t", TS)
    events = (TraceEvent("s1", 1, TS, "reasoning", ReasoningBody("only", (), None)),)
    g = build_graph(header, events)
    with pytest.raises(ChainTooShort):
        make_quiz(g, 1)


def test_two_node_chain_gets_one_question():
    header = SessionHeader("s1", 1, (), "t", TS)
    events = (
        TraceEvent("s1", 1, TS, "reasoning", ReasoningBody("a", (), None)),
        TraceEvent("s1", 2, TS, "reasoning", ReasoningBody("b", (), 1)),
    )
    g = build_graph(header, events)
    assert len(make_quiz(g, 3).questions) == 1


def test_empty_obligations_yield_zero_cdi():
    report = compute_cdi(frozenset(), (), None)
    assert report.coverage == report.reconstruction == report.deliberation == 1.0
    assert report.cdi == 0.0
    assert report.verdict == "ok"


def test_zero_interactions_with_critical_nodes_is_full_debt(fixture_analysis):
    quiz = make_quiz(fixture_analysis.graph, 7)
    report = compute_cdi(fixture_analysis.critical, (), quiz, graph=fixture_analysis.graph)
    assert report.coverage == 0.0
    assert report.reconstruction == 0.0
    assert report.deliberation == 0.0
    assert report.cdi == 1.0
    assert report.verdict == "alert"


def test_worked_example_cdi_is_point_three():
    critical = frozenset({"n1", "n2"})
    quiz_questions = []
    from sentinel.cdi import QuizQuestion, QuizSpec

    for i in range(4):
        quiz_questions.append(QuizQuestion(f"q9-{i}", "edge_question", "n1", "n2", True))
    quiz = QuizSpec("s1", 9, tuple(quiz_questions))
    reviews = [_review(10, 1, "viewed", dwell=7500)]
    for i in range(3):
        reviews.append(_review(11 + i, 1, "quiz_answer", quiz=QuizAnswer(f"q9-{i}", True)))
    reviews.append(_review(14, 1, "quiz_answer", quiz=QuizAnswer("q9-3", False)))
    report = compute_cdi(critical, tuple(reviews), quiz)
    assert report.coverage == 0.5
    assert report.reconstruction == 0.75
    assert report.deliberation == 1.0
    assert abs(report.cdi - 0.3) < 1e-9
    assert abs(report.cdi - cdi_formula(0.5, 0.75, 1.0)) < 1e-12
    assert report.verdict == "ok"


def test_bad_weights_rejected():
    with pytest.raises(BadWeights):
        compute_cdi(frozenset(), (), None, CdiConfig(weight_coverage=0.9))
    with pytest.raises(BadWeights):
        compute_cdi(frozenset(), (), None, CdiConfig(weight_coverage=-0.2, weight_reconstruction=1.0))


def test_unknown_node_ref_rejected(fixture_analysis):
    ghost = _review(99, 999, session="catalog-cache")
    with pytest.raises(UnknownNodeRef):
        compute_cdi(fixture_analysis.critical, (ghost,), None, graph=fixture_analysis.graph)


def test_cdi_bounded_on_random_interaction_sets():
    rng = random.Random(55)
    for _ in range(300):
        critical, reviews, quiz = random_cdi_scenario(rng)
        r = compute_cdi(critical, reviews, quiz)
        for value in (r.coverage, r.reconstruction, r.deliberation, r.cdi):
            assert 0.0 <= value <= 1.0


def test_acknowledging_uncovered_critical_node_never_increases_cdi():
    rng = random.Random(56)
    for _ in range(200):
        critical, reviews, quiz = random_cdi_scenario(rng)
        base = compute_cdi(critical, reviews, quiz)
        covered = {f"n{e.body.node_ref}" for e in reviews if e.body.action in ("viewed", "acknowledged")}
        uncovered = sorted(critical - covered)
        if not uncovered:
            continue
        extra = _review(999, int(uncovered[0][1:]), "acknowledged")
        bumped = compute_cdi(critical, reviews + (extra,), quiz)
        assert bumped.cdi <= base.cdi + 1e-12


def test_additional_correct_answer_never_increases_cdi():
    rng = random.Random(57)
    for _ in range(200):
        critical, reviews, quiz = random_cdi_scenario(rng)
        if quiz is None:
            continue
        base = compute_cdi(critical, reviews, quiz)
        answered = {e.body.quiz.question_id for e in reviews if e.body.action == "quiz_answer"}
        fresh = [q for q in quiz.questions if q.question_id not in answered]
        if not fresh:
            continue
        extra = _review(999, 1, "quiz_answer", quiz=QuizAnswer(fresh[0].question_id, True))
        bumped = compute_cdi(critical, reviews + (extra,), quiz)
        assert bumped.cdi <= base.cdi + 1e-12


def test_verdict_coherent_with_any_threshold():
    rng = random.Random(58)
    for _ in range(200):
        critical, reviews, quiz = random_cdi_scenario(rng)
        threshold = rng.random()
        r = compute_cdi(critical, reviews, quiz, CdiConfig(cit_threshold=threshold))
        assert (r.verdict == "alert") == (r.cdi > threshold)


def test_critical_set_includes_protected_region_touches(fixture_stream):
    header, events = fixture_stream
    seeds = load_seeds(
        "layers:\n  controller: src/controllers/**\n\n"
        "rules:\n  keep-out:\n    category: semantic_stability\n    severity: warn\n"
        "    protect-region: src/controllers/**\n    reason: reviewed by hand\n"
    )
    analysis = analyze_session(header, events, seeds)
    assert critical_set(analysis.graph, (), analysis.facts, seeds)  # even with no reports
    assert "n6" in analysis.critical


def test_fixture_cdi_improves_with_engagement(fixture_stream, fixture_seeds):
    header, events = fixture_stream
    analysis = analyze_session(header, events, fixture_seeds)
    cold = session_cdi(analysis, quiz_seed=7)
    assert cold.verdict == "alert"

    quiz = make_quiz(analysis.graph, 7)
    reviews = [_review(11, 6, "viewed", dwell=8000, session="catalog-cache")]
    for i, q in enumerate(quiz.questions):
        reviews.append(_review(12 + i, 6, "quiz_answer", quiz=QuizAnswer(q.question_id, True), session="catalog-cache"))
    warm = compute_cdi(analysis.critical, tuple(reviews), quiz, graph=analysis.graph)
    assert warm.cdi < cold.cdi
    assert warm.cdi == 0.0
    assert warm.verdict == "ok"


def _r(cdi: float) -> CdiReport:
    return CdiReport("s", 1, 1, 1, cdi, 0.5, "ok")


def test_trend_stable_on_constant_series():
    assert cdi_trend([_r(0.3)] * 6, window=2) == "stable"
    assert cdi_trend([_r(0.3)] * 6, window=3) == "stable"


def test_trend_drifting_example():
    reports = [_r(0.1), _r(0.1), _r(0.4), _r(0.5)]
    assert cdi_trend(reports, window=2) == "drifting"  # 0.45 - 0.1 > 0.1


def test_trend_needs_history():
    with pytest.raises(InsufficientHistory):
        cdi_trend([_r(0.2)], window=2)
    with pytest.raises(InsufficientHistory):
        cdi_trend([_r(0.2)] * 3, window=2)
