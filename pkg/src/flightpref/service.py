"""Session-oriented JSON-over-HTTP service for interactive play.

One process hosts one trained engine and any number of independent game
sessions. Every state change appends to a per-session JSONL event log, and
a restart replays the logs to resume where games left off. Sessions are
serialized by per-session locks; model artifacts are shared read-only.
"""

from __future__ import annotations

import threading
import uuid
from pathlib import Path

from fastapi import FastAPI, HTTPException
from fastapi.responses import RedirectResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from . import game as engine
from .artifacts import ArtifactBundle, load_bundle
from .domain import Rng
from .language import Utterance, default_grammar
from .pragmatics import PragmaticsConfig


class CreateSessionRequest(BaseModel):
    seed: int | None = None
    threshold: float = 0.8


class UtteranceRequest(BaseModel):
    text: str


class GameSession:
    def __init__(self, session_id: str, state: engine.GameState,
                 policy: engine.AssistantPolicy, log: engine.GameLog):
        self.session_id = session_id
        self.state = state
        self.policy = policy
        self.log = log
        self.lock = threading.Lock()


def state_payload(session: GameSession) -> dict:
    state = session.state
    doc = state.to_dict()
    doc["session_id"] = session.session_id
    doc["finished"] = state.finished
    doc["threshold"] = session.policy.confidence_threshold
    if not state.finished:
        doc["options"] = state.current_options.to_dict()
    return doc


class GameService:
    """Holds the engine and the session table."""

    def __init__(self, cfg: PragmaticsConfig, log_dir=None, rng_seed: int = 0):
        self.cfg = cfg
        self.log_dir = Path(log_dir) if log_dir is not None else None
        if self.log_dir is not None:
            self.log_dir.mkdir(parents=True, exist_ok=True)
        self.sessions: dict[str, GameSession] = {}
        self._table_lock = threading.Lock()
        self._rng = Rng(rng_seed)
        self.resume_from_logs()

    # -- persistence --------------------------------------------------------

    def _log_path(self, session_id: str):
        return None if self.log_dir is None else self.log_dir / f"{session_id}.jsonl"

    def resume_from_logs(self) -> int:
        if self.log_dir is None:
            return 0
        restored = 0
        for path in sorted(self.log_dir.glob("*.jsonl")):
            log = engine.GameLog(path)
            if not log.events:
                continue
            state = engine.replay_log(log, self.cfg, strict=False)
            threshold = log.events[0].get("threshold", 0.8)
            session_id = path.stem
            self.sessions[session_id] = GameSession(
                session_id, state, engine.AssistantPolicy(threshold), log
            )
            restored += 1
        return restored

    # -- session lifecycle ----------------------------------------------------

    def create_session(self, seed: int | None, threshold: float) -> GameSession:
        session_id = uuid.uuid4().hex[:12]
        if seed is None:
            seed = int(self._rng.gen.integers(2 ** 62))
        state = engine.game_from_seed(session_id, seed)
        log = engine.GameLog(self._log_path(session_id))
        session = GameSession(session_id, state, engine.AssistantPolicy(threshold), log)
        log.record_created(state, threshold)
        with self._table_lock:
            self.sessions[session_id] = session
        return session

    def get(self, session_id: str) -> GameSession:
        with self._table_lock:
            session = self.sessions.get(session_id)
        if session is None:
            raise HTTPException(status_code=404, detail=f"no session {session_id}")
        return session

    # -- moves ---------------------------------------------------------------

    def submit_utterance(self, session: GameSession, text: str) -> dict:
        if not text.strip():
            raise HTTPException(status_code=422, detail="empty utterance")
        with session.lock:
            state = session.state
            if state.phase != engine.PHASE_UTTERANCE:
                raise HTTPException(
                    status_code=409,
                    detail=f"no utterance expected in phase {state.phase}",
                )
            was_initial = state.pending == engine.PENDING_INITIAL
            round_index = state.round_index
            u = Utterance.from_text(text)
            state = engine.apply_utterance(state, u, self.cfg)
            session.log.append(
                {"event": "utterance", "round": round_index, "text": u.raw}
            )
            action = None
            if was_initial:
                state, action = self._act(session, state)
            session.state = state
            return {"state": state_payload(session), "action": action}

    def assistant_action(self, session: GameSession) -> dict:
        with session.lock:
            state = session.state
            if state.phase != engine.PHASE_ACTION:
                raise HTTPException(
                    status_code=409,
                    detail=f"no action available in phase {state.phase}",
                )
            state, action = self._act(session, state)
            session.state = state
            return {
                **action,
                "posterior": state.posterior.snapshot(),
                "state": state_payload(session),
            }

    def _act(self, session: GameSession, state: engine.GameState):
        round_index = state.round_index
        state, summary = engine.take_action(state, session.policy)
        session.log.append({"event": "action", "round": round_index, **summary})
        return state, summary


def create_app(bundle: ArtifactBundle | None = None, artifacts_dir=None,
               log_dir=None, static_dir=None, support_max_clauses: int | None = None,
               rng_seed: int = 0) -> FastAPI:
    if bundle is None:
        if artifacts_dir is None:
            raise ValueError("need a bundle or an artifacts directory")
        bundle = load_bundle(artifacts_dir)
    overrides = {}
    if support_max_clauses is not None:
        overrides["support"] = default_grammar().enumerate_utterances(support_max_clauses)
    cfg = bundle.config(**overrides)
    service = GameService(cfg, log_dir=log_dir, rng_seed=rng_seed)

    app = FastAPI(title="flightpref", version="0.1.0")
    app.state.service = service

    @app.post("/session")
    def create_session(req: CreateSessionRequest):
        session = service.create_session(req.seed, req.threshold)
        return {"session_id": session.session_id, "state": state_payload(session)}

    @app.get("/session/{session_id}/state")
    def get_state(session_id: str):
        session = service.get(session_id)
        with session.lock:
            return state_payload(session)

    @app.post("/session/{session_id}/utterance")
    def post_utterance(session_id: str, req: UtteranceRequest):
        return service.submit_utterance(service.get(session_id), req.text)

    @app.post("/session/{session_id}/assistant_action")
    def post_action(session_id: str):
        return service.assistant_action(service.get(session_id))

    @app.get("/session/{session_id}/posterior")
    def get_posterior(session_id: str):
        session = service.get(session_id)
        with session.lock:
            return session.state.posterior.snapshot()

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/app", StaticFiles(directory=static_dir, html=True), name="ui")

        @app.get("/")
        def index():
            return RedirectResponse(url="/app/")

    return app
