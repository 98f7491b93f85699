"""File-backed session store: append-only SAT logs plus a derived-artifact cache.

The log file is the source of truth; every derived artifact (graph export,
deviation reports, CDI, verdict) is cached under a key that hashes the log
bytes, the seed document, and the computation parameters, so a cache can be
deleted at any time and every artifact reproduces byte-identically.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Mapping

from .trace import (
    DuplicateSeq,
    NonMonotonicSeq,
    ParseError,
    QuizAnswer,
    Record,
    ReviewBody,
    SessionHeader,
    StreamError,
    TraceEvent,
    format_ts,
    parse_line,
    serialize_event,
    serialize_header,
    validate_stream,
)

DATA_ENV_VAR = "SENTINEL_DATA"


class StoreError(Exception):
    pass


class UnknownSession(StoreError):
    pass


class SeqRegression(StoreError):
    pass


class UnknownNodeRef(StoreError):
    pass


@dataclass(frozen=True)
class IngestAck:
    session_id: str
    accepted: int
    total_lines: int
    rejected: tuple[tuple[int, str], ...] = ()  # (1-based line number, reason)

    @property
    def ok(self) -> bool:
        return not self.rejected


def default_data_dir() -> Path:
    return Path(os.environ.get(DATA_ENV_VAR, "./sentinel-data"))


class SessionStore:
    def __init__(self, data_dir: Path | str):
        self.data_dir = Path(data_dir)
        self.sessions_dir = self.data_dir / "sessions"
        self.cache_dir = self.data_dir / "cache"
        self.quarantine_dir = self.data_dir / "quarantine"
        for d in (self.sessions_dir, self.cache_dir, self.quarantine_dir):
            d.mkdir(parents=True, exist_ok=True)

    # -- log access ---------------------------------------------------------

    def _log_path(self, session_id: str) -> Path:
        if not session_id or "/" in session_id or session_id.startswith("."):
            raise StoreError(f"bad session id: {session_id!r}")
        return self.sessions_dir / f"{session_id}.satl"

    def sessions(self) -> list[str]:
        return sorted(p.stem for p in self.sessions_dir.glob("*.satl"))

    def exists(self, session_id: str) -> bool:
        return self._log_path(session_id).is_file()

    def log_bytes(self, session_id: str) -> bytes:
        path = self._log_path(session_id)
        if not path.is_file():
            raise UnknownSession(session_id)
        return path.read_bytes()

    def records(self, session_id: str) -> tuple[SessionHeader, tuple[TraceEvent, ...]]:
        text = self.log_bytes(session_id).decode("utf-8")
        lines = text.split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        recs: list[Record] = [parse_line(line) for line in lines]
        validate_stream(recs)
        header = recs[0]
        assert isinstance(header, SessionHeader)
        return header, tuple(r for r in recs[1:] if isinstance(r, TraceEvent))

    # -- ingest -------------------------------------------------------------

    def _quarantine(self, session_id: str, rejects: list[tuple[int, str, str]]) -> None:
        if not rejects:
            return
        path = self.quarantine_dir / f"{session_id}.jsonl"
        with path.open("a", encoding="utf-8") as fh:
            for lineno, reason, line in rejects:
                fh.write(json.dumps({"line_no": lineno, "reason": reason, "line": line}) + "\n")

    def ingest_lines(self, session_id: str, lines: list[str]) -> IngestAck:
        """Validate a batch as a continuation of the stored log and append it.

        All-or-nothing: any invalid line quarantines the offenders with their
        reasons and leaves the log untouched. Seq reuse or backtracking is
        reported as a seq regression.
        """
        existing: list[Record] = []
        if self.exists(session_id):
            header, events = self.records(session_id)
            existing = [header, *events]

        rejects: list[tuple[int, str, str]] = []
        parsed: list[Record] = []
        for i, line in enumerate(lines, start=1):
            if line.strip() == "":
                continue
            try:
                rec = parse_line(line)
            except ParseError as exc:
                rejects.append((i, f"parse: {exc}", line))
                continue
            if rec.session_id != session_id:
                rejects.append((i, f"session mismatch: {rec.session_id!r}", line))
                continue
            parsed.append(rec)

        if not rejects:
            try:
                validate_stream(existing + parsed)
            except (DuplicateSeq, NonMonotonicSeq) as exc:
                rejects.append((0, f"seq regression: {exc}", ""))
            except StreamError as exc:
                rejects.append((0, f"stream: {exc}", ""))

        if rejects:
            self._quarantine(session_id, rejects)
            return IngestAck(session_id, 0, len(lines), tuple((n, r) for n, r, _ in rejects))

        path = self._log_path(session_id)
        chunk = "".join(
            (serialize_event(r) if isinstance(r, TraceEvent) else serialize_header(r)) + "\n" for r in parsed
        )
        with path.open("a", encoding="utf-8") as fh:
            fh.write(chunk)
        self.invalidate(session_id)
        return IngestAck(session_id, len(parsed), len(lines))

    def append_review(
        self,
        session_id: str,
        reviewer: str,
        node_ref: int,
        action: str,
        dwell_ms: int | None = None,
        quiz: Mapping[str, Any] | None = None,
        client_nonce: str | None = None,
        now_ms: int | None = None,
    ) -> tuple[int, bool]:
        """Append a review event with a server-assigned seq.

        Returns (seq, deduplicated). Idempotence key: (reviewer, node_ref,
        action, client_nonce) — the nonce travels as an opaque extension key.
        """
        header, events = self.records(session_id)
        agentic_seqs = {e.seq for e in events if e.kind != "review"}
        if node_ref not in agentic_seqs:
            raise UnknownNodeRef(f"no agentic event with seq {node_ref}")

        if client_nonce is not None:
            for e in events:
                b = e.body
                if (
                    isinstance(b, ReviewBody)
                    and b.reviewer == reviewer
                    and b.node_ref == node_ref
                    and b.action == action
                    and e.extra.get("client_nonce") == client_nonce
                ):
                    return e.seq, True

        qa = None
        if quiz is not None:
            qa = QuizAnswer(str(quiz["question_id"]), bool(quiz["correct"]))
        last = events[-1] if events else None
        seq = (last.seq if last else 0) + 1
        ts = format_ts(now_ms if now_ms is not None else int(time.time() * 1000))
        if last is not None and ts < last.ts:
            ts = last.ts  # keep timestamps non-decreasing under clock skew
        extra = {"client_nonce": client_nonce} if client_nonce is not None else {}
        ev = TraceEvent(
            session_id=session_id,
            seq=seq,
            ts=ts,
            kind="review",
            body=ReviewBody(reviewer, node_ref, action, dwell_ms, qa),
            extra=extra,
        )
        validate_stream([header, *events, ev])
        with self._log_path(session_id).open("a", encoding="utf-8") as fh:
            fh.write(serialize_event(ev) + "\n")
        self.invalidate(session_id)
        return seq, False

    # -- derived-artifact cache ----------------------------------------------

    def artifact(
        self,
        session_id: str,
        kind: str,
        inputs: Mapping[str, Any],
        builder: Callable[[], str],
    ) -> str:
        """Fetch a derived artifact, building and caching it on miss.

        The cache key hashes the session log plus every named input, so a
        stale artifact can never be served.
        """
        h = hashlib.sha256()
        h.update(self.log_bytes(session_id))
        for key in sorted(inputs):
            h.update(b"\0" + key.encode("utf-8") + b"=" + str(inputs[key]).encode("utf-8"))
        digest = h.hexdigest()[:24]
        path = self.cache_dir / session_id / f"{kind}-{digest}"
        if path.is_file():
            return path.read_text(encoding="utf-8")
        content = builder()
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp")
        tmp.write_text(content, encoding="utf-8")
        tmp.replace(path)
        return content

    def invalidate(self, session_id: str) -> None:
        session_cache = self.cache_dir / session_id
        if session_cache.is_dir():
            for p in session_cache.glob("*"):
                p.unlink()

    def clear_caches(self) -> None:
        for session_cache in self.cache_dir.glob("*"):
            if session_cache.is_dir():
                for p in session_cache.glob("*"):
                    p.unlink()
                session_cache.rmdir()
