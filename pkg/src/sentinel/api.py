"""HTTP service exposing session artifacts to the review UI and other clients.

All endpoints live under the versioned prefix ``/v1``. GET endpoints are
side-effect free and serve cached derived artifacts; POSTs append to the
session log. Responses for graph, deviations, cdi, and verdict return the
cached artifact bytes verbatim, so repeated reads are byte-identical.
"""

from __future__ import annotations

import json
from pathlib import Path

from fastapi import FastAPI, Query, Request, Response
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from .cdi import CdiConfig, quiz_to_json, report_to_json
from .graph import export_graph
from .harness import Clock, SystemClock
from .pipeline import analyze_session, empty_seeds, session_cdi, session_quiz, verdict_json
from .seeds import CompiledSeeds, SeedError, load_seeds
from .store import SessionStore, StoreError, UnknownNodeRef, UnknownSession


def _deviations_json(analysis) -> str:
    items = []
    for r in analysis.reports:
        items.append(
            {
                "deviation_id": r.deviation_id,
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
        )
    obj = {"version": "d1", "session": analysis.header.session_id, "deviations": items}
    return json.dumps(obj, separators=(",", ":"), sort_keys=True)


def create_app(
    data_dir: Path | str,
    seeds_text: str = "",
    token: str | None = None,
    clock: Clock | None = None,
    ui_dir: Path | str | None = None,
) -> FastAPI:
    store = SessionStore(data_dir)
    seeds: CompiledSeeds = load_seeds(seeds_text) if seeds_text.strip() else empty_seeds()
    seeds_fingerprint = seeds_text
    clock = clock or SystemClock()

    app = FastAPI(title="sentinel", version="0.1.0")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    app.state.store = store
    app.state.seeds = seeds

    def authorized(request: Request) -> bool:
        if token is None:
            return True
        return request.headers.get("authorization") == f"Bearer {token}"

    @app.middleware("http")
    async def bearer_gate(request: Request, call_next):
        if request.url.path.startswith("/v1") and not authorized(request):
            return JSONResponse({"error": "unauthorized"}, status_code=401)
        return await call_next(request)

    def analysis_for(session_id: str):
        header, events = store.records(session_id)
        return analyze_session(header, events, seeds)

    @app.get("/v1/sessions")
    def list_sessions():
        out = []
        for sid in store.sessions():
            header, events = store.records(sid)
            out.append(
                {
                    "session_id": sid,
                    "agent_label": header.agent_label,
                    "started_at": header.started_at,
                    "events": len(events),
                    "last_seq": events[-1].seq if events else 0,
                }
            )
        return {"sessions": out}

    @app.get("/v1/sessions/{session_id}/graph")
    def get_graph(session_id: str):
        try:
            content = store.artifact(
                session_id,
                "graph.json",
                {"seeds": seeds_fingerprint},
                lambda: export_graph(analysis_for(session_id).graph, "json"),
            )
        except UnknownSession:
            return JSONResponse({"error": f"unknown session {session_id!r}"}, status_code=404)
        return Response(content=content, media_type="application/json")

    @app.get("/v1/sessions/{session_id}/deviations")
    def get_deviations(session_id: str):
        try:
            content = store.artifact(
                session_id,
                "deviations.json",
                {"seeds": seeds_fingerprint},
                lambda: _deviations_json(analysis_for(session_id)),
            )
        except UnknownSession:
            return JSONResponse({"error": f"unknown session {session_id!r}"}, status_code=404)
        return Response(content=content, media_type="application/json")

    @app.get("/v1/sessions/{session_id}/cdi")
    def get_cdi(session_id: str, seed: int = Query(default=0, alias="seed")):
        try:
            content = store.artifact(
                session_id,
                "cdi.json",
                {"seeds": seeds_fingerprint, "quiz_seed": seed},
                lambda: report_to_json(session_cdi(analysis_for(session_id), seed, CdiConfig())),
            )
        except UnknownSession:
            return JSONResponse({"error": f"unknown session {session_id!r}"}, status_code=404)
        return Response(content=content, media_type="application/json")

    @app.get("/v1/sessions/{session_id}/verdict")
    def get_verdict(session_id: str, seed: int = Query(default=0, alias="seed")):
        def build() -> str:
            analysis = analysis_for(session_id)
            report = session_cdi(analysis, seed, CdiConfig())
            return verdict_json(analysis, report)

        try:
            content = store.artifact(
                session_id,
                "verdict.json",
                {"seeds": seeds_fingerprint, "quiz_seed": seed},
                build,
            )
        except UnknownSession:
            return JSONResponse({"error": f"unknown session {session_id!r}"}, status_code=404)
        return Response(content=content, media_type="application/json")

    @app.get("/v1/sessions/{session_id}/quiz")
    def get_quiz(session_id: str, seed: int = Query(default=0, alias="seed")):
        try:
            analysis = analysis_for(session_id)
        except UnknownSession:
            return JSONResponse({"error": f"unknown session {session_id!r}"}, status_code=404)
        quiz = session_quiz(analysis, seed)
        if quiz is None:
            return {"session": session_id, "seed": seed, "questions": []}
        return Response(content=quiz_to_json(quiz), media_type="application/json")

    @app.post("/v1/sessions/{session_id}/events")
    async def post_events(session_id: str, request: Request):
        body = (await request.body()).decode("utf-8")
        lines = body.split("\n")
        ack = store.ingest_lines(session_id, lines)
        payload = {
            "session_id": ack.session_id,
            "accepted": ack.accepted,
            "rejected": [{"line_no": n, "reason": r} for n, r in ack.rejected],
        }
        return JSONResponse(payload, status_code=200 if ack.ok else 400)

    @app.post("/v1/sessions/{session_id}/reviews")
    async def post_review(session_id: str, request: Request):
        try:
            body = json.loads((await request.body()).decode("utf-8"))
        except json.JSONDecodeError:
            return JSONResponse({"error": "body must be JSON"}, status_code=400)
        try:
            seq, deduped = store.append_review(
                session_id,
                reviewer=str(body["reviewer"]),
                node_ref=int(body["node_ref"]),
                action=str(body["action"]),
                dwell_ms=body.get("dwell_ms"),
                quiz=body.get("quiz"),
                client_nonce=body.get("client_nonce"),
                now_ms=clock.now_ms(),
            )
        except KeyError as exc:
            return JSONResponse({"error": f"missing field {exc}"}, status_code=400)
        except UnknownSession:
            return JSONResponse({"error": f"unknown session {session_id!r}"}, status_code=404)
        except UnknownNodeRef as exc:
            return JSONResponse({"error": str(exc)}, status_code=422)
        except StoreError as exc:
            return JSONResponse({"error": str(exc)}, status_code=400)
        return {"seq": seq, "deduplicated": deduped}

    @app.get("/healthz")
    def healthz():
        return {"ok": True}

    if ui_dir is not None:
        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app


__all__ = ["create_app", "SeedError"]
