"""HTTP API over the conductor, consumed by the CLI and the web UI.

Endpoints (JSON bodies):
  POST /sessions {query}                  open a session and run planning
  GET  /sessions/{id}                     session projection snapshot
  POST /sessions/{id}/message {text}      clarification answer or revision
  POST /sessions/{id}/approve-plan        plan gate
  POST /sessions/{id}/reject              reject at any human gate
  POST /sessions/{id}/approve-execution   execution gate
  GET  /sessions/{id}/events?after=N&wait=S   long-poll event stream
  GET  /sessions/{id}/timing              phase timing report
  GET  /sessions/{id}/workflow            canonical workflow.json bytes

Illegal actions return 409 with the offending phase; unknown sessions 404.
Handlers are synchronous and serialized per session.
"""

from __future__ import annotations

import threading
import time
from pathlib import Path

from fastapi import FastAPI, HTTPException
from fastapi.responses import JSONResponse, Response
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .conductor import (
    Answer,
    ApproveExecution,
    ApprovePlan,
    Conductor,
    IllegalAction,
    Phase,
    Reject,
    Revise,
    Session,
)


class QueryBody(BaseModel):
    query: str


class MessageBody(BaseModel):
    text: str


class ActorBody(BaseModel):
    actor: str = "user"


def session_view(conductor: Conductor, session: Session) -> dict:
    """Projection the UI renders; no client-side recomputation required."""
    view: dict = {
        "id": session.id,
        "phase": session.phase.value,
        "query": session.query,
        "domain": session.domain,
        "skill_config": session.skill_config,
        "skill_fingerprint": session.skill_fingerprint,
        "messages": [{"role": m.role, "text": m.text} for m in session.messages],
        "approvals": [
            {"gate": a.gate, "actor": a.actor, "at": a.at} for a in session.approvals
        ],
        "terminal_cause": session.terminal_cause,
        "clarification_rounds": session.clarification_rounds,
        "intent": session.intent.as_record() if session.intent else None,
        "plan": None,
        "summary": None,
        "run": None,
        "event_count": session.journal.seq,
    }
    if session.advisory:
        staging = session.staging or session.advisory.staging
        view["plan"] = {
            "description": session.advisory.description,
            "advisory_parallelism": dict(session.advisory.advisory_parallelism),
            "actions": [
                {
                    "unit": a.unit.label,
                    "kind": a.kind,
                    "est_bytes": a.est_bytes,
                    "full_bytes": a.full_bytes,
                }
                for a in staging.actions
            ],
            "total_est_bytes": staging.total_est_bytes,
            "total_full_bytes": staging.total_full_bytes,
            "savings_fraction": staging.savings_fraction,
        }
    if session.summary:
        view["summary"] = {
            "task_count": session.summary.task_count,
            "est_peak_storage_bytes": session.summary.est_peak_storage_bytes,
            "projected_runtime_s": session.summary.projected_runtime_s,
        }
    if session.run_summary:
        view["run"] = session.run_summary.as_record()
    return view


def create_app(conductor: Conductor, ui_dir: Path | None = None) -> FastAPI:
    app = FastAPI(title="intent2dag conductor", version="0.1.0")
    locks: dict[str, threading.Lock] = {}
    locks_guard = threading.Lock()

    def lock_for(session_id: str) -> threading.Lock:
        with locks_guard:
            return locks.setdefault(session_id, threading.Lock())

    def get_session(session_id: str) -> Session:
        session = conductor.sessions.get(session_id)
        if session is None:
            raise HTTPException(status_code=404, detail=f"no session {session_id}")
        return session

    def run_action(session_id: str, action) -> dict:
        session = get_session(session_id)
        with lock_for(session_id):
            try:
                conductor.step(session, action)
            except IllegalAction as exc:
                raise HTTPException(
                    status_code=409,
                    detail={"error": "illegal_action", "phase": exc.phase.value, "action": exc.action},
                ) from exc
        return session_view(conductor, session)

    @app.post("/sessions")
    def open_session(body: QueryBody) -> dict:
        session = conductor.open_session(body.query)
        return session_view(conductor, session)

    @app.get("/sessions/{session_id}")
    def get_view(session_id: str) -> dict:
        return session_view(conductor, get_session(session_id))

    @app.post("/sessions/{session_id}/message")
    def post_message(session_id: str, body: MessageBody) -> dict:
        session = get_session(session_id)
        if session.phase is Phase.AWAITING_CLARIFICATION:
            return run_action(session_id, Answer(body.text))
        return run_action(session_id, Revise(body.text))

    @app.post("/sessions/{session_id}/approve-plan")
    def approve_plan(session_id: str, body: ActorBody | None = None) -> dict:
        return run_action(session_id, ApprovePlan(actor=(body or ActorBody()).actor))

    @app.post("/sessions/{session_id}/reject")
    def reject(session_id: str, body: ActorBody | None = None) -> dict:
        return run_action(session_id, Reject(actor=(body or ActorBody()).actor))

    @app.post("/sessions/{session_id}/approve-execution")
    def approve_execution(session_id: str, body: ActorBody | None = None) -> dict:
        return run_action(session_id, ApproveExecution(actor=(body or ActorBody()).actor))

    @app.get("/sessions/{session_id}/events")
    def events(session_id: str, after: int = 0, wait: float = 0.0) -> JSONResponse:
        session = get_session(session_id)
        deadline = time.monotonic() + min(wait, 30.0)
        while True:
            fresh = [e for e in session.journal.events if e["seq"] > after]
            if fresh or time.monotonic() >= deadline:
                return JSONResponse({"events": fresh, "last_seq": session.journal.seq})
            time.sleep(0.05)

    @app.get("/sessions/{session_id}/timing")
    def timing(session_id: str) -> dict:
        session = get_session(session_id)
        return conductor.timing_report(session).as_record()

    @app.get("/sessions/{session_id}/workflow")
    def workflow(session_id: str) -> Response:
        session = get_session(session_id)
        if session.dag_bytes is None:
            raise HTTPException(status_code=404, detail="no workflow generated yet")
        return Response(content=session.dag_bytes, media_type="application/json")

    if ui_dir is not None:
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
