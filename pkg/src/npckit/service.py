"""HTTP service exposing interactive dialogue sessions to the chat UI.

Sessions are in-memory with TTL eviction; each permits one in-flight turn
(a concurrent post gets 409). The turn endpoint returns the library
TurnOutcome JSON unchanged: the service adds transport, not semantics.
"""

from __future__ import annotations

import json
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .backend import Backend, load_profile
from .dialogue import Conversation, load_dataset, turn_to_json_dict
from .functions import Registry, load_registry
from .router import ConcurrentTurnError, RunSettings, Session, TurnExecutionError

DEFAULT_SESSION_TTL = 3600.0


@dataclass(frozen=True)
class ServiceConfig:
    listen_host: str = "127.0.0.1"
    listen_port: int = 8080
    backend_profile: str = "profile.json"
    registry: str = "registry.json"
    dataset: str = "conversations.json"
    session_ttl: float = DEFAULT_SESSION_TTL
    cors_allowlist: tuple[str, ...] = ()
    turn_deadline: float = 7.0

    def __post_init__(self):
        object.__setattr__(self, "cors_allowlist", tuple(self.cors_allowlist))


def load_service_config(path) -> ServiceConfig:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    base = Path(path).resolve().parent

    def _resolve(p: str) -> str:
        candidate = Path(p)
        return str(candidate if candidate.is_absolute() else base / candidate)

    config = ServiceConfig(
        listen_host=raw.get("listen_host", "127.0.0.1"),
        listen_port=int(raw.get("listen_port", 8080)),
        backend_profile=_resolve(raw["backend_profile"]),
        registry=_resolve(raw["registry"]),
        dataset=_resolve(raw["dataset"]),
        session_ttl=float(raw.get("session_ttl", DEFAULT_SESSION_TTL)),
        cors_allowlist=tuple(raw.get("cors_allowlist", ())),
        turn_deadline=float(raw.get("turn_deadline", 7.0)),
    )
    for label, p in (("backend profile", config.backend_profile), ("registry", config.registry), ("dataset", config.dataset)):
        if not Path(p).exists():
            raise FileNotFoundError(f"{label} path does not exist: {p}")
    return config


class CreateSessionBody(BaseModel):
    conversation_id: str = Field(min_length=1)


class TurnBody(BaseModel):
    query: str = Field(min_length=1)


@dataclass
class _LiveSession:
    id: str
    conversation_id: str
    session: Session
    ttl: float
    expires_at: float = field(default=0.0)

    def touch(self) -> None:
        self.expires_at = time.monotonic() + self.ttl


class SessionStore:
    def __init__(self, ttl: float):
        self.ttl = ttl
        self._sessions: dict[str, _LiveSession] = {}
        self._lock = threading.Lock()

    def sweep(self) -> None:
        now = time.monotonic()
        with self._lock:
            expired = [sid for sid, s in self._sessions.items() if s.expires_at <= now]
            for sid in expired:
                del self._sessions[sid]

    def create(self, conversation_id: str, session: Session) -> _LiveSession:
        live = _LiveSession(
            id=uuid.uuid4().hex, conversation_id=conversation_id, session=session, ttl=self.ttl
        )
        live.touch()
        with self._lock:
            self._sessions[live.id] = live
        return live

    def get(self, session_id: str) -> _LiveSession:
        self.sweep()
        with self._lock:
            live = self._sessions.get(session_id)
        if live is None:
            raise HTTPException(status_code=404, detail="unknown or expired session")
        live.touch()
        return live

    def delete(self, session_id: str) -> None:
        with self._lock:
            if session_id not in self._sessions:
                raise HTTPException(status_code=404, detail="unknown or expired session")
            del self._sessions[session_id]


def _background_summary(conv: Conversation) -> dict:
    persona = conv.background.persona
    state = conv.background.state
    return {
        "persona": {
            "name": persona.name,
            "age": persona.age,
            "gender": persona.gender,
            "occupation": persona.occupation,
            "appearance": persona.appearance,
        },
        "role": conv.background.role,
        "state": {"location": state.location, "time": state.time, "weather": state.weather},
    }


def create_app(
    config: ServiceConfig,
    backend: Backend | None = None,
    registry: Registry | None = None,
    conversations: list[Conversation] | None = None,
) -> FastAPI:
    """Assemble the service. Dependencies may be injected for tests;
    otherwise they are loaded from the config's paths."""
    backend = backend if backend is not None else load_profile(config.backend_profile)
    registry = registry if registry is not None else load_registry(config.registry)
    conversations = conversations if conversations is not None else load_dataset(config.dataset)
    by_id = {c.id: c for c in conversations}
    store = SessionStore(ttl=config.session_ttl)
    settings = RunSettings(turn_deadline=config.turn_deadline)

    app = FastAPI(title="npckit service")
    if config.cors_allowlist:
        app.add_middleware(
            CORSMiddleware,
            allow_origins=list(config.cors_allowlist),
            allow_methods=["*"],
            allow_headers=["*"],
        )
    app.state.store = store
    app.state.backend = backend

    @app.get("/api/conversations")
    def list_conversations():
        return [
            {
                "id": conv.id,
                "persona": {
                    "name": conv.background.persona.name,
                    "occupation": conv.background.persona.occupation,
                },
            }
            for conv in conversations
        ]

    @app.post("/api/sessions")
    def create_session(body: CreateSessionBody):
        store.sweep()
        conv = by_id.get(body.conversation_id)
        if conv is None:
            raise HTTPException(status_code=404, detail=f"unknown conversation {body.conversation_id!r}")
        # Sessions start from the fixed background with an empty history;
        # the caller plays the player role from scratch.
        live = store.create(conv.id, Session(conv.with_turns(()), backend, registry, settings))
        return {
            "session_id": live.id,
            "conversation_id": conv.id,
            "background": _background_summary(conv),
        }

    @app.post("/api/sessions/{session_id}/turns")
    def post_turn(session_id: str, body: TurnBody):
        live = store.get(session_id)
        try:
            outcome = live.session.run_turn(body.query)
        except ConcurrentTurnError:
            raise HTTPException(status_code=409, detail="a turn is already in flight") from None
        except TurnExecutionError as exc:
            return JSONResponse(
                status_code=502,
                content={
                    "detail": {
                        "stage": exc.stage,
                        "adapter": exc.adapter.value,
                        "message": str(exc.cause),
                    }
                },
            )
        return outcome.to_json_dict()

    @app.get("/api/sessions/{session_id}")
    def get_transcript(session_id: str):
        live = store.get(session_id)
        return {
            "session_id": live.id,
            "conversation_id": live.conversation_id,
            "turns": [turn_to_json_dict(t) for t in live.session.conversation.turns],
        }

    @app.delete("/api/sessions/{session_id}", status_code=204)
    def delete_session(session_id: str):
        store.delete(session_id)

    return app


def serve(config: ServiceConfig) -> None:
    """Run the service until interrupted."""
    import uvicorn

    uvicorn.run(create_app(config), host=config.listen_host, port=config.listen_port)
