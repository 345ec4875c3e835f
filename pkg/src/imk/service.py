"""Session-oriented decode service.

Each session accumulates touch points; every new point triggers a
whole-sequence re-decode, so earlier characters in the response may differ
from previous responses. Sessions are in-memory only, expire after 30
idle minutes, and are individually locked so concurrent clients see the
same results as serial execution. The model is shared read-only.
"""

from __future__ import annotations

import os
import threading
import time
import uuid
from dataclasses import dataclass, field
from typing import Sequence

from fastapi import FastAPI
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .data import SessionMeta, TouchPoint
from .metrics import wpm
from .model.sancd import DecodedText, SequenceLengthError

SESSION_TTL_SECONDS = 30 * 60
MAX_SESSION_POINTS = 256


class SessionError(Exception):
    def __init__(self, status_code: int, detail: str):
        self.status_code = status_code
        self.detail = detail
        super().__init__(detail)


@dataclass
class Session:
    session_id: str
    meta: SessionMeta
    points: list[TouchPoint] = field(default_factory=list)
    last_decode: DecodedText | None = None
    created_at: float = field(default_factory=time.monotonic)
    touched_at: float = field(default_factory=time.monotonic)
    lock: threading.Lock = field(default_factory=threading.Lock)

    def wpm_now(self) -> float:
        """Eq-8 style speed from the first/last keystroke timestamps the
        client supplied."""
        if len(self.points) < 2:
            return 0.0
        minutes = (self.points[-1].t_ms - self.points[0].t_ms) / 60000.0
        if minutes <= 0:
            return 0.0
        return wpm(len(self.points), minutes)


class SessionStore:
    def __init__(self, ttl_seconds: float = SESSION_TTL_SECONDS):
        self.ttl = ttl_seconds
        self._sessions: dict[str, Session] = {}
        self._lock = threading.Lock()

    def create(self, meta: SessionMeta) -> Session:
        session = Session(session_id=uuid.uuid4().hex, meta=meta)
        with self._lock:
            self._purge_expired()
            self._sessions[session.session_id] = session
        return session

    def get(self, session_id: str) -> Session:
        with self._lock:
            session = self._sessions.get(session_id)
            if session is None or time.monotonic() - session.touched_at > self.ttl:
                self._sessions.pop(session_id, None)
                raise SessionError(404, f"unknown or expired session {session_id!r}")
            session.touched_at = time.monotonic()
            return session

    def _purge_expired(self):
        now = time.monotonic()
        stale = [k for k, s in self._sessions.items() if now - s.touched_at > self.ttl]
        for k in stale:
            del self._sessions[k]

    def __len__(self) -> int:
        with self._lock:
            return len(self._sessions)


class CreateSessionBody(BaseModel):
    screen_w: int
    screen_h: int


class PointBody(BaseModel):
    x: float
    y: float
    t_ms: int


def _decode_response(session: Session, latency_ms: float) -> dict:
    dec = session.last_decode
    return {
        "text": dec.text if dec else "",
        "provenance": list(dec.provenance) if dec else [],
        "wpm": session.wpm_now(),
        "latency_ms": latency_ms,
    }


def create_app(model, ui_dir: str | None = None, api_base: str = "") -> FastAPI:
    """Build the HTTP app around any decoder exposing
    ``decode(points, meta) -> DecodedText`` (plus ``pixel prediction`` for
    the heatmap when available)."""
    app = FastAPI(title="invisible-keyboard decode service")
    store = SessionStore()
    app.state.store = store
    app.state.model = model

    @app.exception_handler(SessionError)
    async def _session_error(_, exc: SessionError):
        return JSONResponse(status_code=exc.status_code, content={"detail": exc.detail})

    @app.get("/v1/healthz")
    def healthz():
        return {"status": "ok", "sessions": len(store)}

    @app.get("/v1/uiconfig")
    def uiconfig():
        return {"api_base": api_base}

    @app.post("/v1/session")
    def create_session(body: CreateSessionBody):
        if body.screen_w <= 0 or body.screen_h <= 0:
            raise SessionError(400, f"invalid screen dims {body.screen_w}x{body.screen_h}")
        meta = SessionMeta(
            participant_id="live",
            age=0,
            device="service",
            screen_w=body.screen_w,
            screen_h=body.screen_h,
        )
        session = store.create(meta)
        return {"session_id": session.session_id}

    @app.post("/v1/session/{session_id}/point")
    def push_point(session_id: str, body: PointBody):
        session = store.get(session_id)
        with session.lock:
            if session.points and body.t_ms < session.points[-1].t_ms:
                raise SessionError(
                    400, f"t_ms regression: {body.t_ms} after {session.points[-1].t_ms}"
                )
            if len(session.points) >= MAX_SESSION_POINTS:
                raise SessionError(
                    409,
                    f"session at capacity ({MAX_SESSION_POINTS} points); start a new session",
                )
            session.points.append(TouchPoint(body.x, body.y, body.t_ms))
            start = time.perf_counter()
            try:
                session.last_decode = model.decode(session.points, session.meta)
            except SequenceLengthError as e:
                session.points.pop()
                raise SessionError(409, str(e)) from e
            latency = (time.perf_counter() - start) * 1000.0
            return _decode_response(session, latency)

    @app.delete("/v1/session/{session_id}/point")
    def pop_point(session_id: str):
        session = store.get(session_id)
        with session.lock:
            if not session.points:
                raise SessionError(400, "session has no points to remove")
            session.points.pop()
            start = time.perf_counter()
            if session.points:
                session.last_decode = model.decode(session.points, session.meta)
            else:
                session.last_decode = None
            latency = (time.perf_counter() - start) * 1000.0
            return _decode_response(session, latency)

    @app.get("/v1/session/{session_id}/heatmap")
    def heatmap(session_id: str, step: int = 40):
        if step < 1:
            raise SessionError(400, f"step must be >= 1, got {step}")
        session = store.get(session_id)
        with session.lock:
            try:
                grid = model.prediction_map(session.points, session.meta, step)
            except SequenceLengthError as e:
                raise SessionError(409, str(e)) from e
        return {
            "w": session.meta.screen_w,
            "h": session.meta.screen_h,
            "step": step,
            "chars": [list(row) for row in grid.chars],
        }

    if ui_dir:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")
    return app


def resolve_addr(addr: str | None) -> tuple[str, int]:
    """host:port resolution; the IMK_ADDR environment variable overrides
    the flag when set."""
    addr = os.environ.get("IMK_ADDR") or addr or "127.0.0.1:8000"
    host, _, port = addr.rpartition(":")
    if not host:
        raise ValueError(f"address must be host:port, got {addr!r}")
    return host, int(port)
