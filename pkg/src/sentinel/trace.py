"""Standardized agentic trace (SAT) data model and wire format.

A SAT stream is a UTF-8 text file (`.satl`), one JSON record per line. Line 1
is the session header; every following line is an event. The canonical form of
a line is bit-exact: core keys in the fixed order ``v, session, seq, ts,
kind``, then all remaining keys (body fields plus opaque extensions) sorted,
compact separators, no trailing whitespace. Unknown top-level keys are
preserved verbatim but never influence validation or downstream analysis.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Any, Iterable, Mapping, Sequence, Union

FORMAT_VERSION = 1

EVENT_KINDS = ("plan", "reasoning", "tool_call", "observation", "review")
OUTCOMES = ("ok", "error")
REVIEW_ACTIONS = ("viewed", "acknowledged", "flagged", "quiz_answer")

# Tokens: intent tags and vocabulary entries.
_TOKEN_RE = re.compile(r"^[a-z0-9][a-z0-9_.-]*$")
_TS_RE = re.compile(r"^(\d{4})-(\d{2})-(\d{2})T(\d{2}):(\d{2}):(\d{2})(\.\d{1,6})?(Z|[+-]\d{2}:\d{2})$")

_CORE_KEYS = ("v", "session", "seq", "ts", "kind")


class TraceError(Exception):
    """Base for all SAT format errors."""


class ParseError(TraceError):
    """A single line could not be parsed into a valid record."""


class MalformedSyntax(ParseError):
    pass


class MissingField(ParseError):
    def __init__(self, name: str):
        super().__init__(f"missing field: {name}")
        self.name = name


class BadKind(ParseError):
    pass


class BadReference(ParseError):
    """A reference field does not point strictly backward."""


class UnsupportedVersion(ParseError):
    pass


class StreamError(TraceError):
    """A stream of individually valid records violates a global invariant."""


class MissingHeader(StreamError):
    pass


class UnexpectedHeader(StreamError):
    pass


class SessionMismatch(StreamError):
    pass


class DuplicateSeq(StreamError):
    pass


class NonMonotonicSeq(StreamError):
    pass


class NonMonotonicTimestamp(StreamError):
    pass


class DanglingReference(StreamError):
    pass


class MultipleObservations(StreamError):
    pass


class UnknownIntentTag(StreamError):
    pass


def canonical_ts(value: str) -> str:
    """Normalize an RFC 3339 timestamp to UTC with millisecond precision.

    Canonical form: ``YYYY-MM-DDTHH:MM:SS.mmmZ``. Accepts any UTC offset and
    up to microsecond fractions on input.
    """
    if not isinstance(value, str):
        raise MalformedSyntax(f"timestamp must be a string, got {type(value).__name__}")
    m = _TS_RE.match(value)
    if not m:
        raise MalformedSyntax(f"bad timestamp: {value!r}")
    frac = (m.group(7) or ".")[1:].ljust(6, "0")  # 3.10 needs exactly 3 or 6 digits
    offset = m.group(8)
    iso = value[: m.start(7)] if m.group(7) else value[: m.start(8)]
    try:
        dt = datetime.fromisoformat(f"{iso}.{frac}" + (offset if offset != "Z" else "+00:00"))
    except ValueError as exc:
        raise MalformedSyntax(f"bad timestamp: {value!r}") from exc
    dt = dt.astimezone(timezone.utc)
    return dt.strftime("%Y-%m-%dT%H:%M:%S.") + f"{dt.microsecond // 1000:03d}Z"


def format_ts(epoch_ms: int) -> str:
    """Render a millisecond epoch as a canonical SAT timestamp."""
    dt = datetime.fromtimestamp(epoch_ms / 1000.0, tz=timezone.utc)
    return dt.strftime("%Y-%m-%dT%H:%M:%S.") + f"{dt.microsecond // 1000:03d}Z"


@dataclass(frozen=True)
class PlanBody:
    goal: str
    steps: tuple[str, ...]


@dataclass(frozen=True)
class ReasoningBody:
    text: str
    intent_tags: tuple[str, ...]  # sorted, unique
    parent: int | None = None


@dataclass(frozen=True)
class ToolCallBody:
    tool: str
    args: Mapping[str, Any]
    caused_by: int


@dataclass(frozen=True)
class ObservationBody:
    of: int
    outcome: str
    payload: str


@dataclass(frozen=True)
class QuizAnswer:
    question_id: str
    correct: bool


@dataclass(frozen=True)
class ReviewBody:
    reviewer: str
    node_ref: int
    action: str
    dwell_ms: int | None = None
    quiz: QuizAnswer | None = None


Body = Union[PlanBody, ReasoningBody, ToolCallBody, ObservationBody, ReviewBody]


@dataclass(frozen=True)
class SessionHeader:
    session_id: str
    format_version: int
    intent_vocabulary: tuple[str, ...]  # sorted, unique
    agent_label: str
    started_at: str
    extra: Mapping[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class TraceEvent:
    session_id: str
    seq: int
    ts: str
    kind: str
    body: Body
    extra: Mapping[str, Any] = field(default_factory=dict)


Record = Union[SessionHeader, TraceEvent]


def _require(obj: Mapping[str, Any], name: str) -> Any:
    if name not in obj:
        raise MissingField(name)
    return obj[name]


def _as_str(value: Any, name: str) -> str:
    if not isinstance(value, str):
        raise MalformedSyntax(f"{name} must be a string")
    return value


def _as_seq_ref(value: Any, name: str, own_seq: int) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise MalformedSyntax(f"{name} must be an integer seq")
    if value < 0 or value >= own_seq:
        raise BadReference(f"{name}={value} does not point strictly backward from seq {own_seq}")
    return value


def _as_token_list(value: Any, name: str) -> tuple[str, ...]:
    if not isinstance(value, list):
        raise MalformedSyntax(f"{name} must be a list of tokens")
    tokens = []
    for t in value:
        if not isinstance(t, str) or not _TOKEN_RE.match(t):
            raise MalformedSyntax(f"{name} contains a bad token: {t!r}")
        tokens.append(t)
    return tuple(sorted(set(tokens)))


def _parse_common(obj: Mapping[str, Any]) -> tuple[str, int]:
    v = _require(obj, "v")
    if isinstance(v, bool) or not isinstance(v, int):
        raise MalformedSyntax("v must be an integer")
    if v != FORMAT_VERSION:
        raise UnsupportedVersion(f"unsupported format version {v}")
    session = _as_str(_require(obj, "session"), "session")
    if not session:
        raise MalformedSyntax("session must be non-empty")
    return session, v


def _load_obj(line: str) -> dict[str, Any]:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise MalformedSyntax(f"not a JSON record: {exc}") from exc
    if not isinstance(obj, dict):
        raise MalformedSyntax("record must be a JSON object")
    return obj


_BODY_KEYS = {
    "plan": ("goal", "steps"),
    "reasoning": ("text", "intent_tags", "parent"),
    "tool_call": ("tool", "args", "caused_by"),
    "observation": ("of", "outcome", "payload"),
    "review": ("reviewer", "node_ref", "action", "dwell_ms", "quiz"),
}
_HEADER_BODY_KEYS = ("agent_label", "intent_vocabulary", "started_at")


def parse_header(line: str) -> SessionHeader:
    """Parse the first line of a SAT stream."""
    obj = _load_obj(line)
    session, v = _parse_common(obj)
    kind = _require(obj, "kind")
    if kind != "header":
        raise BadKind(f"expected header, got kind {kind!r}")
    started_at = canonical_ts(_require(obj, "started_at"))
    vocab = _as_token_list(_require(obj, "intent_vocabulary"), "intent_vocabulary")
    agent_label = _as_str(_require(obj, "agent_label"), "agent_label")
    known = set(_CORE_KEYS) | set(_HEADER_BODY_KEYS)
    extra = {k: obj[k] for k in obj if k not in known}
    return SessionHeader(session, v, vocab, agent_label, started_at, extra)


def parse_event(line: str) -> TraceEvent:
    """Parse one serialized event line into a fully validated TraceEvent.

    Unknown top-level keys are preserved opaquely in ``extra``. Reference
    fields must point strictly backward (raise BadReference otherwise);
    whether the target exists is a stream-level check.
    """
    obj = _load_obj(line)
    session, _ = _parse_common(obj)
    seq = _require(obj, "seq")
    if isinstance(seq, bool) or not isinstance(seq, int) or seq < 0:
        raise MalformedSyntax("seq must be a non-negative integer")
    ts = canonical_ts(_require(obj, "ts"))
    kind = _require(obj, "kind")
    if kind not in EVENT_KINDS:
        raise BadKind(f"unknown event kind: {kind!r}")

    body: Body
    if kind == "plan":
        goal = _as_str(_require(obj, "goal"), "goal")
        steps = _require(obj, "steps")
        if not isinstance(steps, list) or not steps or not all(isinstance(s, str) for s in steps):
            raise MalformedSyntax("steps must be a non-empty list of strings")
        body = PlanBody(goal, tuple(steps))
    elif kind == "reasoning":
        text = _as_str(_require(obj, "text"), "text")
        tags = _as_token_list(_require(obj, "intent_tags"), "intent_tags")
        parent = obj.get("parent")
        if parent is not None:
            parent = _as_seq_ref(parent, "parent", seq)
        body = ReasoningBody(text, tags, parent)
    elif kind == "tool_call":
        tool = _as_str(_require(obj, "tool"), "tool")
        args = _require(obj, "args")
        if not isinstance(args, dict):
            raise MalformedSyntax("args must be an object")
        for k, val in args.items():
            if not isinstance(k, str):
                raise MalformedSyntax("args keys must be strings")
            if not isinstance(val, (str, int, float, bool)) and val is not None:
                raise MalformedSyntax(f"args[{k!r}] must be a scalar or text")
        caused_by = _as_seq_ref(_require(obj, "caused_by"), "caused_by", seq)
        body = ToolCallBody(tool, dict(args), caused_by)
    elif kind == "observation":
        of = _as_seq_ref(_require(obj, "of"), "of", seq)
        outcome = _require(obj, "outcome")
        if outcome not in OUTCOMES:
            raise MalformedSyntax(f"outcome must be one of {OUTCOMES}")
        payload = _as_str(_require(obj, "payload"), "payload")
        body = ObservationBody(of, outcome, payload)
    else:  # review
        reviewer = _as_str(_require(obj, "reviewer"), "reviewer")
        node_ref = _as_seq_ref(_require(obj, "node_ref"), "node_ref", seq)
        action = _require(obj, "action")
        if action not in REVIEW_ACTIONS:
            raise MalformedSyntax(f"action must be one of {REVIEW_ACTIONS}")
        dwell_ms = obj.get("dwell_ms")
        if dwell_ms is not None:
            if isinstance(dwell_ms, bool) or not isinstance(dwell_ms, int) or dwell_ms < 0:
                raise MalformedSyntax("dwell_ms must be a non-negative integer")
        quiz_obj = obj.get("quiz")
        if (quiz_obj is not None) != (action == "quiz_answer"):
            raise MalformedSyntax("quiz must be present iff action is quiz_answer")
        quiz = None
        if quiz_obj is not None:
            if not isinstance(quiz_obj, dict):
                raise MalformedSyntax("quiz must be an object")
            qid = _as_str(_require(quiz_obj, "question_id"), "quiz.question_id")
            correct = quiz_obj.get("correct")
            if "correct" not in quiz_obj:
                raise MissingField("quiz.correct")
            if not isinstance(correct, bool):
                raise MalformedSyntax("quiz.correct must be a boolean")
            quiz = QuizAnswer(qid, correct)
        body = ReviewBody(reviewer, node_ref, action, dwell_ms, quiz)

    known = set(_CORE_KEYS) | set(_BODY_KEYS[kind])
    extra = {k: obj[k] for k in obj if k not in known}
    return TraceEvent(session, seq, ts, kind, body, extra)


def parse_line(line: str) -> Record:
    """Parse a line as either a header or an event, dispatching on kind."""
    obj = _load_obj(line)
    if obj.get("kind") == "header":
        return parse_header(line)
    return parse_event(line)


def _dump_value(value: Any) -> str:
    # Nested objects get sorted keys so extension payloads stay byte-stable.
    return json.dumps(value, separators=(",", ":"), sort_keys=True, ensure_ascii=False)


def _dump_record(core: Sequence[tuple[str, Any]], rest: Mapping[str, Any]) -> str:
    parts = [f"{json.dumps(k)}:{_dump_value(v)}" for k, v in core]
    parts += [f"{json.dumps(k)}:{_dump_value(rest[k])}" for k in sorted(rest)]
    return "{" + ",".join(parts) + "}"


def serialize_header(h: SessionHeader) -> str:
    rest: dict[str, Any] = {
        "agent_label": h.agent_label,
        "intent_vocabulary": list(h.intent_vocabulary),
        "started_at": h.started_at,
    }
    rest.update(h.extra)
    core = [("v", h.format_version), ("session", h.session_id), ("kind", "header")]
    return _dump_record(core, rest)


def serialize_event(e: TraceEvent) -> str:
    """Render an event in canonical single-line form.

    Optional fields (parent, dwell_ms, quiz) are omitted when unset; empty
    intent_tags serialize as an empty list, never as an absent key.
    """
    b = e.body
    rest: dict[str, Any]
    if isinstance(b, PlanBody):
        rest = {"goal": b.goal, "steps": list(b.steps)}
    elif isinstance(b, ReasoningBody):
        rest = {"text": b.text, "intent_tags": list(b.intent_tags)}
        if b.parent is not None:
            rest["parent"] = b.parent
    elif isinstance(b, ToolCallBody):
        rest = {"tool": b.tool, "args": dict(b.args), "caused_by": b.caused_by}
    elif isinstance(b, ObservationBody):
        rest = {"of": b.of, "outcome": b.outcome, "payload": b.payload}
    elif isinstance(b, ReviewBody):
        rest = {"reviewer": b.reviewer, "node_ref": b.node_ref, "action": b.action}
        if b.dwell_ms is not None:
            rest["dwell_ms"] = b.dwell_ms
        if b.quiz is not None:
            rest["quiz"] = {"question_id": b.quiz.question_id, "correct": b.quiz.correct}
    else:
        raise TypeError(f"unknown body type: {type(b).__name__}")
    rest.update(e.extra)
    core = [
        ("v", FORMAT_VERSION),
        ("session", e.session_id),
        ("seq", e.seq),
        ("ts", e.ts),
        ("kind", e.kind),
    ]
    return _dump_record(core, rest)


def serialize_record(r: Record) -> str:
    if isinstance(r, SessionHeader):
        return serialize_header(r)
    return serialize_event(r)


def serialize_stream(header: SessionHeader, events: Iterable[TraceEvent]) -> str:
    lines = [serialize_header(header)]
    lines.extend(serialize_event(e) for e in events)
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class StreamReport:
    session_id: str
    counts: Mapping[str, int]
    event_count: int
    max_seq: int


def validate_stream(records: Sequence[Record]) -> StreamReport:
    """Check the global invariants of one session's record sequence.

    The sequence must start with the session header; events must carry unique,
    strictly increasing seq values with non-decreasing timestamps, and every
    reference must resolve backward to an event of the right kind.
    """
    if not records:
        raise MissingHeader("empty stream")
    head = records[0]
    if not isinstance(head, SessionHeader):
        raise MissingHeader("first record is not a session header")
    vocab = set(head.intent_vocabulary)

    counts = {k: 0 for k in EVENT_KINDS}
    kind_by_seq: dict[int, str] = {}
    observed: set[int] = set()
    last_seq = -1
    last_ts = ""
    for rec in records[1:]:
        if isinstance(rec, SessionHeader):
            raise UnexpectedHeader("header after the first line")
        if rec.session_id != head.session_id:
            raise SessionMismatch(f"event seq {rec.seq} belongs to session {rec.session_id!r}")
        if rec.seq in kind_by_seq:
            raise DuplicateSeq(f"seq {rec.seq} appears twice")
        if rec.seq <= last_seq:
            raise NonMonotonicSeq(f"seq {rec.seq} after {last_seq}")
        if last_ts and rec.ts < last_ts:
            raise NonMonotonicTimestamp(f"ts {rec.ts} before {last_ts} at seq {rec.seq}")

        b = rec.body
        if isinstance(b, ReasoningBody):
            if b.parent is not None and kind_by_seq.get(b.parent) not in ("plan", "reasoning"):
                raise DanglingReference(f"seq {rec.seq}: parent {b.parent} is not a prior plan/reasoning")
            bad = set(b.intent_tags) - vocab
            if bad:
                raise UnknownIntentTag(f"seq {rec.seq}: tags not in session vocabulary: {sorted(bad)}")
        elif isinstance(b, ToolCallBody):
            if kind_by_seq.get(b.caused_by) not in ("plan", "reasoning"):
                raise DanglingReference(f"seq {rec.seq}: caused_by {b.caused_by} is not a prior plan/reasoning")
        elif isinstance(b, ObservationBody):
            if kind_by_seq.get(b.of) != "tool_call":
                raise DanglingReference(f"seq {rec.seq}: of {b.of} is not a prior tool_call")
            if b.of in observed:
                raise MultipleObservations(f"tool_call {b.of} observed twice")
            observed.add(b.of)
        elif isinstance(b, ReviewBody):
            if kind_by_seq.get(b.node_ref) not in ("plan", "reasoning", "tool_call", "observation"):
                raise DanglingReference(f"seq {rec.seq}: node_ref {b.node_ref} is not a prior agentic event")

        counts[rec.kind] += 1
        kind_by_seq[rec.seq] = rec.kind
        last_seq = rec.seq
        last_ts = rec.ts

    return StreamReport(head.session_id, counts, len(records) - 1, last_seq)


def parse_stream_text(text: str) -> tuple[SessionHeader, tuple[TraceEvent, ...]]:
    """Parse a whole `.satl` document and validate it as a stream."""
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    records: list[Record] = []
    for i, line in enumerate(lines):
        try:
            records.append(parse_line(line))
        except ParseError as exc:
            raise type(exc)(f"line {i + 1}: {exc}") from exc
    validate_stream(records)
    header = records[0]
    assert isinstance(header, SessionHeader)
    return header, tuple(r for r in records[1:] if isinstance(r, TraceEvent))
