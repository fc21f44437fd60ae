"""HTTP/1.1 JSON API over the examiner session engine (paths under /api/v1).

State violations answer 409, unknown ids 404, malformed payloads 422;
every error body carries a machine-readable ``error.code``. Session
mutations are serialized per session and appended to a per-session event
log, so a service restart replays sessions losslessly.
"""

from __future__ import annotations

import json
import threading
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from . import session as sess
from .artifacts import compute_case, load_case, payload_for_level, save_case
from .config import Config
from .errors import (NOT_FOUND, STATE_VIOLATIONS, BadPhaseError, LeamatchError,
                     LevelNotActiveError, ScoresNotComputedError, UnknownCaseError)
from .forest import Forest, load_forest
from .store import ScanStore


class AppState:
    """Shared service state: scan store, forest, case artifacts, sessions."""

    def __init__(self, store: ScanStore, forest: Optional[Forest] = None,
                 cfg: Optional[Config] = None, data_dir=None):
        self.store = store
        self.forest = forest
        self.cfg = cfg or Config()
        self.data_dir = Path(data_dir) if data_dir else store.root
        self.cases_dir = self.data_dir / "cases"
        self.sessions_dir = self.data_dir / "sessions"
        self.cases_dir.mkdir(parents=True, exist_ok=True)
        self.sessions_dir.mkdir(parents=True, exist_ok=True)
        self._sessions: dict = {}
        self._locks: dict = {}
        self._global_lock = threading.Lock()

    def case_doc(self, case_id: str) -> dict:
        return load_case(self.cases_dir, case_id)

    def session_lock(self, session_id: str) -> threading.Lock:
        with self._global_lock:
            return self._locks.setdefault(session_id, threading.Lock())

    def _events_path(self, session_id: str) -> Path:
        return self.sessions_dir / f"{session_id}.events.jsonl"

    def get_session(self, session_id: str) -> sess.ExaminerSession:
        if session_id in self._sessions:
            return self._sessions[session_id]
        path = self._events_path(session_id)
        if not path.exists():
            raise sess.UnknownIdError(f"no session {session_id}")
        events = [json.loads(line) for line in path.read_text().splitlines() if line]
        session = sess.replay(events)
        self._sessions[session_id] = session
        return session

    def register(self, session: sess.ExaminerSession) -> None:
        self._sessions[session.session_id] = session
        self.persist_events(session)

    def persist_events(self, session: sess.ExaminerSession) -> None:
        path = self._events_path(session.session_id)
        with open(path, "w", encoding="utf-8") as fh:
            for event in session.audit:
                fh.write(json.dumps(event, sort_keys=True) + "\n")


class CreateSessionBody(BaseModel):
    case_id: str
    mode: str = sess.GUIDED


class AddLevelBody(BaseModel):
    level: int = Field(ge=1, le=6)


class SelectionBody(BaseModel):
    bullet_pair: Optional[list[str]] = None
    land_pair: Optional[list[int]] = None


class MatchFrameBody(BaseModel):
    enabled: bool
    hypothesis_phase: int = 0


class ConclusionBody(BaseModel):
    category: str
    rationale: str = ""


class ComputeBody(BaseModel):
    bullet_ids: Optional[list[str]] = None


def _error_response(exc: LeamatchError) -> JSONResponse:
    if isinstance(exc, NOT_FOUND):
        status = 404
    elif isinstance(exc, STATE_VIOLATIONS):
        status = 409
    elif isinstance(exc, BadPhaseError):
        status = 422
    else:
        status = 422
    return JSONResponse(status_code=status,
                        content={"error": {"code": exc.code, "message": exc.message}})


def session_view(session: sess.ExaminerSession) -> dict:
    return {
        "session_id": session.session_id,
        "case_id": session.case_id,
        "mode": session.mode,
        "bullet_ids": session.bullet_ids,
        "n_lands": session.n_lands,
        "active_levels": sorted(session.active_levels),
        "selection": {
            "bullet_pair": session.bullet_pair,
            "land_pair": session.land_pair,
        },
        "match_frame": {
            "enabled": session.match_frame_enabled,
            "hypothesis_phase": session.match_frame_phase,
        },
        "concluded": session.concluded,
        "conclusion": None if session.conclusion is None else {
            "category": session.conclusion.category,
            "rationale": session.conclusion.rationale,
            "levels_visited_at_decision": session.conclusion.levels_visited_at_decision,
        },
    }


def create_app(state: AppState) -> FastAPI:
    app = FastAPI(title="leamatch examiner service")
    app.state.leamatch = state

    @app.exception_handler(LeamatchError)
    async def leamatch_error_handler(request: Request, exc: LeamatchError):
        return _error_response(exc)

    @app.post("/api/v1/cases/{case_id}/compute")
    def compute(case_id: str, body: ComputeBody):
        if state.forest is None:
            raise ScoresNotComputedError("no forest loaded; train one first")
        bullet_ids = body.bullet_ids or state.store.bullet_ids()
        if not bullet_ids:
            raise UnknownCaseError("no bullets in store")
        doc = compute_case(state.store, case_id, bullet_ids, state.forest, state.cfg)
        save_case(doc, state.cases_dir)
        return {"case_id": case_id, "bullet_ids": doc["bullet_ids"],
                "artifact_digest": doc["artifact_digest"],
                "cfg_digest": doc["cfg_digest"]}

    @app.get("/api/v1/cases/{case_id}/bullets")
    def case_bullets(case_id: str):
        doc = state.case_doc(case_id)
        return {"case_id": case_id, "bullet_ids": doc["bullet_ids"],
                "n_lands": doc["n_lands"]}

    @app.post("/api/v1/sessions", status_code=201)
    def create_session(body: CreateSessionBody):
        doc = state.case_doc(body.case_id)
        if len(doc["bullet_ids"]) < 2:
            raise ScoresNotComputedError("case needs at least 2 scored bullets")
        if body.mode not in (sess.GUIDED, sess.DIAGNOSTICS):
            return JSONResponse(status_code=422, content={
                "error": {"code": "BadMode", "message": f"unknown mode {body.mode}"}})
        session = sess.create_session(body.case_id, doc["bullet_ids"],
                                      doc["n_lands"], mode=body.mode)
        state.register(session)
        return session_view(session)

    @app.get("/api/v1/sessions/{session_id}")
    def get_session(session_id: str):
        return session_view(state.get_session(session_id))

    @app.post("/api/v1/sessions/{session_id}/levels")
    def add_level(session_id: str, body: AddLevelBody):
        with state.session_lock(session_id):
            session = state.get_session(session_id)
            sess.add_level(session, body.level)
            state.persist_events(session)
        return session_view(session)

    @app.post("/api/v1/sessions/{session_id}/selection")
    def select(session_id: str, body: SelectionBody):
        if (body.bullet_pair is None) == (body.land_pair is None):
            return JSONResponse(status_code=422, content={
                "error": {"code": "BadSelection",
                          "message": "provide exactly one of bullet_pair, land_pair"}})
        with state.session_lock(session_id):
            session = state.get_session(session_id)
            if body.bullet_pair is not None:
                if len(body.bullet_pair) != 2:
                    return JSONResponse(status_code=422, content={
                        "error": {"code": "BadSelection",
                                  "message": "bullet_pair needs two ids"}})
                sess.select_bullet_pair(session, *body.bullet_pair)
            else:
                if len(body.land_pair) != 2:
                    return JSONResponse(status_code=422, content={
                        "error": {"code": "BadSelection",
                                  "message": "land_pair needs two indices"}})
                sess.select_land_pair(session, *body.land_pair)
            state.persist_events(session)
        return session_view(session)

    @app.post("/api/v1/sessions/{session_id}/match-frame")
    def match_frame(session_id: str, body: MatchFrameBody):
        with state.session_lock(session_id):
            session = state.get_session(session_id)
            sess.set_match_frame(session, body.enabled, body.hypothesis_phase)
            state.persist_events(session)
        return session_view(session)

    @app.get("/api/v1/sessions/{session_id}/levels/{k}")
    def level_payload(session_id: str, k: int):
        session = state.get_session(session_id)
        if k not in session.active_levels:
            raise LevelNotActiveError(f"level {k} is not active")
        doc = state.case_doc(session.case_id)
        return payload_for_level(doc, session, k, store=state.store)

    @app.post("/api/v1/sessions/{session_id}/conclusion")
    def conclude(session_id: str, body: ConclusionBody):
        if body.category not in sess.CONCLUSION_CATEGORIES:
            return JSONResponse(status_code=422, content={
                "error": {"code": "BadCategory",
                          "message": f"category must be one of {sess.CONCLUSION_CATEGORIES}"}})
        with state.session_lock(session_id):
            session = state.get_session(session_id)
            sess.record_conclusion(session, body.category, body.rationale)
            state.persist_events(session)
        return session_view(session)

    @app.get("/api/v1/sessions/{session_id}/audit")
    def audit(session_id: str):
        session = state.get_session(session_id)
        return {"session_id": session_id, "events": session.audit}

    return app


def build_app(store_path, forest_path=None, config_path=None) -> FastAPI:
    """Convenience factory used by the CLI ``serve`` command."""
    store = ScanStore(store_path)
    forest = load_forest(forest_path) if forest_path else None
    cfg = Config()
    if config_path:
        from .config import load_config
        cfg = load_config(config_path)
    return create_app(AppState(store, forest=forest, cfg=cfg))
