from __future__ import annotations

import json

import pytest

from sentinel.store import SessionStore, StoreError, UnknownNodeRef, UnknownSession


@pytest.fixture()
def store(tmp_path):
    return SessionStore(tmp_path / "data")


def test_ingest_full_fixture_stream(store, golden_satl_text):
    lines = golden_satl_text.splitlines()
    ack = store.ingest_lines("catalog-cache", lines)
    assert ack.ok
    assert ack.accepted == len(lines) == 11
    assert store.sessions() == ["catalog-cache"]
    header, events = store.records("catalog-cache")
    assert header.session_id == "catalog-cache"
    assert len(events) == 10


def test_replayed_duplicate_line_is_seq_regression(store, golden_satl_text):
    lines = golden_satl_text.splitlines()
    assert store.ingest_lines("catalog-cache", lines).ok
    again = store.ingest_lines("catalog-cache", [lines[1]])
    assert not again.ok
    assert "seq regression" in again.rejected[0][1]
    # log unchanged
    assert len(store.records("catalog-cache")[1]) == 10


def test_failed_ingest_leaves_log_unchanged_and_quarantines(store, golden_satl_text):
    lines = golden_satl_text.splitlines()
    assert store.ingest_lines("catalog-cache", lines).ok
    before = store.log_bytes("catalog-cache")
    bad_batch = ['{"v":1,"session":"catalog-cache","seq":99}', "garbage"]
    ack = store.ingest_lines("catalog-cache", bad_batch)
    assert not ack.ok and ack.accepted == 0
    assert store.log_bytes("catalog-cache") == before
    qfile = store.quarantine_dir / "catalog-cache.jsonl"
    entries = [json.loads(l) for l in qfile.read_text().splitlines()]
    assert len(entries) == 2
    assert all(e["reason"] for e in entries)


def test_session_id_mismatch_rejected(store, golden_satl_text):
    ack = store.ingest_lines("some-other-id", golden_satl_text.splitlines())
    assert not ack.ok
    assert "session mismatch" in ack.rejected[0][1]


def test_interleaved_sessions_stay_isolated(store, golden_satl_text):
    a_lines = golden_satl_text.splitlines()
    b_lines = [l.replace("catalog-cache", "catalog-cache-b") for l in a_lines]
    for a, b in zip(a_lines, b_lines):
        assert store.ingest_lines("catalog-cache", [a]).ok
        assert store.ingest_lines("catalog-cache-b", [b]).ok
    assert store.sessions() == ["catalog-cache", "catalog-cache-b"]
    for sid in store.sessions():
        header, events = store.records(sid)
        assert len(events) == 10


def test_event_batch_must_start_with_header(store, golden_satl_text):
    lines = golden_satl_text.splitlines()
    ack = store.ingest_lines("catalog-cache", lines[1:])
    assert not ack.ok


def test_append_review_assigns_next_seq_and_dedups(store, golden_satl_text):
    store.ingest_lines("catalog-cache", golden_satl_text.splitlines())
    seq1, deduped1 = store.append_review(
        "catalog-cache", "alice", 6, "acknowledged", client_nonce="abc", now_ms=1767614500000
    )
    assert (seq1, deduped1) == (11, False)
    seq2, deduped2 = store.append_review(
        "catalog-cache", "alice", 6, "acknowledged", client_nonce="abc", now_ms=1767614600000
    )
    assert (seq2, deduped2) == (11, True)
    _, events = store.records("catalog-cache")
    reviews = [e for e in events if e.kind == "review"]
    assert len(reviews) == 1
    assert reviews[0].extra["client_nonce"] == "abc"

    seq3, deduped3 = store.append_review(
        "catalog-cache", "alice", 6, "acknowledged", client_nonce="def", now_ms=1767614700000
    )
    assert (seq3, deduped3) == (12, False)


def test_append_review_validates_node_ref(store, golden_satl_text):
    store.ingest_lines("catalog-cache", golden_satl_text.splitlines())
    with pytest.raises(UnknownNodeRef):
        store.append_review("catalog-cache", "alice", 999, "viewed")
    with pytest.raises(UnknownSession):
        store.append_review("nope", "alice", 1, "viewed")


def test_artifact_cache_round_trip(store, golden_satl_text):
    store.ingest_lines("catalog-cache", golden_satl_text.splitlines())
    calls = {"n": 0}

    def build() -> str:
        calls["n"] += 1
        return "artifact-content"

    a = store.artifact("catalog-cache", "thing", {"p": 1}, build)
    b = store.artifact("catalog-cache", "thing", {"p": 1}, build)
    assert a == b == "artifact-content"
    assert calls["n"] == 1
    store.artifact("catalog-cache", "thing", {"p": 2}, build)
    assert calls["n"] == 2


def test_appending_invalidates_cached_artifacts(store, golden_satl_text):
    store.ingest_lines("catalog-cache", golden_satl_text.splitlines())
    calls = {"n": 0}

    def build() -> str:
        calls["n"] += 1
        return f"v{calls['n']}"

    store.artifact("catalog-cache", "thing", {}, build)
    store.append_review("catalog-cache", "alice", 6, "viewed", dwell_ms=6000, now_ms=1767614500000)
    # log changed, so the key changes and the artifact rebuilds
    assert store.artifact("catalog-cache", "thing", {}, build) == "v2"


def test_bad_session_ids_rejected(store):
    for bad in ("", "../x", "a/b", ".hidden"):
        with pytest.raises(StoreError):
            store.ingest_lines(bad, ["{}"])
