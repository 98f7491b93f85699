"""Cognitive debt index: scoring reviewer engagement with a session.

The index is the weighted complement of three component scores, each in
[0, 1]:

* coverage       — critical nodes that got a viewed or acknowledged review
* reconstruction — quiz questions about principal-chain order answered right
* deliberation   — viewed critical nodes dwelt on for at least the floor

``cdi = 1 - (w_cov * coverage + w_rec * reconstruction + w_del * deliberation)``
with defaults 0.4 / 0.4 / 0.2, a 5000 ms dwell floor, and an alert threshold
of 0.5. The threshold is a configured placeholder, not an empirically
calibrated constant; reports echo the configuration so runs stay comparable.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from typing import Mapping, Sequence

from .deviation import ChangeFacts, DeviationReport
from .graph import CausalGraph, principal_chain
from .seeds import CompiledSeeds, ProtectRegion, normalize_path
from .trace import ReviewBody, TraceEvent


class CdiError(Exception):
    pass


class ChainTooShort(CdiError):
    pass


class BadWeights(CdiError):
    pass


class UnknownNodeRef(CdiError):
    pass


class InsufficientHistory(CdiError):
    pass


@dataclass(frozen=True)
class CdiConfig:
    weight_coverage: float = 0.4
    weight_reconstruction: float = 0.4
    weight_deliberation: float = 0.2
    dwell_floor_ms: int = 5000
    cit_threshold: float = 0.5

    def validate(self) -> None:
        weights = (self.weight_coverage, self.weight_reconstruction, self.weight_deliberation)
        if any(w < 0 for w in weights):
            raise BadWeights("weights must be non-negative")
        if abs(sum(weights) - 1.0) > 1e-9:
            raise BadWeights(f"weights must sum to 1, got {sum(weights)}")
        if not 0.0 <= self.cit_threshold <= 1.0:
            raise BadWeights(f"cit_threshold must be in [0,1], got {self.cit_threshold}")


@dataclass(frozen=True)
class QuizQuestion:
    question_id: str
    kind: str  # always "edge_question"
    node_a: str
    node_b: str
    truth: bool  # node_a precedes node_b on the principal chain


@dataclass(frozen=True)
class QuizSpec:
    session_id: str
    seed: int
    questions: tuple[QuizQuestion, ...]


@dataclass(frozen=True)
class CdiReport:
    session_id: str
    coverage: float
    reconstruction: float
    deliberation: float
    cdi: float
    cit_threshold: float
    verdict: str  # ok | alert
    config: CdiConfig = CdiConfig()


def critical_set(
    g: CausalGraph,
    reports: Sequence[DeviationReport],
    facts: Mapping[str, ChangeFacts],
    seeds: CompiledSeeds,
) -> frozenset[str]:
    """Deviation-bearing nodes plus nodes touching any protected region."""
    critical = {r.node_id for r in reports}
    region_res = [r for rule in seeds.rules if isinstance(rule.decl.clause, ProtectRegion) for r in rule.region_res]
    if region_res:
        for node in g.nodes:
            f = facts.get(node.node_id)
            if f is None:
                continue
            for fc in f.files:
                if any(rx.match(normalize_path(fc.path)) for rx in region_res):
                    critical.add(node.node_id)
                    break
    return frozenset(critical)


def make_quiz(g: CausalGraph, rng_seed: int, count: int = 3) -> QuizSpec:
    """Sample order questions over the principal chain, deterministically per seed."""
    chain = principal_chain(g)
    if len(chain) < 2:
        raise ChainTooShort(f"principal chain has {len(chain)} node(s); need at least 2")
    rng = random.Random(rng_seed)
    pairs = [(i, j) for i in range(len(chain)) for j in range(i + 1, len(chain))]
    take = min(count, len(pairs)) if len(chain) >= 3 else 1
    chosen = rng.sample(pairs, take)
    questions = []
    for idx, (i, j) in enumerate(chosen):
        a, b = (i, j) if rng.random() < 0.5 else (j, i)
        questions.append(
            QuizQuestion(
                question_id=f"q{rng_seed}-{idx}",
                kind="edge_question",
                node_a=chain[a],
                node_b=chain[b],
                truth=a < b,
            )
        )
    return QuizSpec(g.session_id, rng_seed, tuple(questions))


def compute_cdi(
    critical: frozenset[str],
    reviews: Sequence[TraceEvent],
    quiz: QuizSpec | None,
    config: CdiConfig = CdiConfig(),
    graph: CausalGraph | None = None,
) -> CdiReport:
    """Score reviewer engagement and apply the alert threshold.

    When a graph is given, review node_refs are resolved against it and an
    unresolvable ref raises UnknownNodeRef; without a graph, refs are taken
    as node seqs verbatim.
    """
    config.validate()
    session_id = graph.session_id if graph is not None else (quiz.session_id if quiz else "")

    viewed: dict[str, int] = {}  # node_id -> max dwell seen (-1 when never given)
    acked: set[str] = set()
    answers: dict[str, bool] = {}  # question_id -> latest correctness
    for ev in reviews:
        body = ev.body
        if not isinstance(body, ReviewBody):
            continue
        if graph is not None:
            node = graph.node_for_seq(body.node_ref)
            if node is None:
                raise UnknownNodeRef(f"review at seq {ev.seq} references unknown node seq {body.node_ref}")
            node_id = node.node_id
        else:
            node_id = f"n{body.node_ref}"
        if body.action == "viewed":
            dwell = body.dwell_ms if body.dwell_ms is not None else -1
            viewed[node_id] = max(viewed.get(node_id, -1), dwell)
        elif body.action == "acknowledged":
            acked.add(node_id)
        elif body.action == "quiz_answer" and body.quiz is not None:
            answers[body.quiz.question_id] = body.quiz.correct

    if critical:
        engaged = {n for n in critical if n in viewed or n in acked}
        coverage = len(engaged) / len(critical)
        viewed_critical = [n for n in critical if n in viewed]
        if viewed_critical:
            deliberate = sum(1 for n in viewed_critical if viewed[n] >= config.dwell_floor_ms)
            deliberation = deliberate / len(viewed_critical)
        else:
            deliberation = 0.0
    else:
        coverage = 1.0
        deliberation = 1.0

    if quiz is None or not quiz.questions:
        reconstruction = 1.0
    else:
        correct = sum(1 for q in quiz.questions if answers.get(q.question_id) is True)
        reconstruction = correct / len(quiz.questions)

    cdi = 1.0 - (
        config.weight_coverage * coverage
        + config.weight_reconstruction * reconstruction
        + config.weight_deliberation * deliberation
    )
    cdi = min(1.0, max(0.0, cdi))
    verdict = "alert" if cdi > config.cit_threshold else "ok"
    return CdiReport(
        session_id=session_id,
        coverage=coverage,
        reconstruction=reconstruction,
        deliberation=deliberation,
        cdi=cdi,
        cit_threshold=config.cit_threshold,
        verdict=verdict,
        config=config,
    )


def cdi_trend(reports: Sequence[CdiReport], window: int, delta: float = 0.1) -> str:
    """Windowed drift check over time-ordered reports: 'stable' or 'drifting'."""
    if window < 2:
        raise CdiError(f"window must be >= 2, got {window}")
    if len(reports) < 2 * window:
        raise InsufficientHistory(f"need {2 * window} reports for window {window}, have {len(reports)}")
    last = [r.cdi for r in reports[-window:]]
    prev = [r.cdi for r in reports[-2 * window : -window]]
    drift = sum(last) / window - sum(prev) / window
    return "drifting" if drift > delta else "stable"


def quiz_to_json(quiz: QuizSpec) -> str:
    obj = {
        "session": quiz.session_id,
        "seed": quiz.seed,
        "questions": [
            {
                "question_id": q.question_id,
                "kind": q.kind,
                "node_a": q.node_a,
                "node_b": q.node_b,
                "truth": q.truth,
            }
            for q in quiz.questions
        ],
    }
    return json.dumps(obj, separators=(",", ":"), sort_keys=True)


def report_to_json(report: CdiReport) -> str:
    """Single-record `.cdi` form, configuration echoed alongside the scores."""
    obj = {
        "session": report.session_id,
        "coverage": report.coverage,
        "reconstruction": report.reconstruction,
        "deliberation": report.deliberation,
        "cdi": report.cdi,
        "cit_threshold": report.cit_threshold,
        "verdict": report.verdict,
        "config": {
            "weight_coverage": report.config.weight_coverage,
            "weight_reconstruction": report.config.weight_reconstruction,
            "weight_deliberation": report.config.weight_deliberation,
            "dwell_floor_ms": report.config.dwell_floor_ms,
            "cit_threshold": report.config.cit_threshold,
            "cit_note": "configured threshold; not an empirically calibrated constant",
        },
    }
    return json.dumps(obj, separators=(",", ":"), sort_keys=True)
