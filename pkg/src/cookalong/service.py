"""Live chat orchestration: session store, HTTP API, snapshot persistence.

Each session holds a recipe, the dialog so far, and the tracked instruction
state. Posting a message runs the full pipeline (intent detection, knowledge
selection, completion, state update) and commits the session only after every
fallible call has succeeded, so a failed request leaves the session exactly
as it was.
"""

from __future__ import annotations

import json
import logging
import threading
import uuid
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Mapping, Sequence

from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .corpus import CorpusError, Recipe, Turn, recipe_to_dict, turn_to_dict
from .generation import (
    KNOWLEDGE_MODES,
    BackendError,
    CompletionBackend,
    KnowledgeMode,
    respond,
)
from .intent import IntentCatalog, IntentEntry, IntentParseError, detect_intents
from .tracker import (
    ScorerUnavailableError,
    TrackerConfig,
    advance_state,
    score_steps,
)

logger = logging.getLogger(__name__)

SNAPSHOT_VERSION = 1


class SessionNotFoundError(KeyError):
    def __init__(self, session_id: str) -> None:
        super().__init__(session_id)
        self.session_id = session_id

    def __str__(self) -> str:
        return f"unknown session {self.session_id!r}"


class RecipeNotFoundError(KeyError):
    def __init__(self, recipe_id: str) -> None:
        super().__init__(recipe_id)
        self.recipe_id = recipe_id

    def __str__(self) -> str:
        return f"unknown recipe {self.recipe_id!r}"


class SessionBusyError(RuntimeError):
    def __init__(self, session_id: str) -> None:
        super().__init__(f"session {session_id!r} is processing another message")
        self.session_id = session_id


class SnapshotError(ValueError):
    """A snapshot file could not be parsed or validated."""


@dataclass(frozen=True)
class SessionConfig:
    tracker: TrackerConfig
    knowledge_mode: KnowledgeMode = "full"
    use_intent: bool = False
    max_history_chars: int | None = None

    def __post_init__(self) -> None:
        if self.knowledge_mode not in KNOWLEDGE_MODES:
            raise ValueError(f"unknown knowledge mode {self.knowledge_mode!r}")
        if self.max_history_chars is not None and self.max_history_chars < 1:
            raise ValueError("max_history_chars must be positive")

    def to_dict(self) -> dict:
        return {
            "scorer": self.tracker.scorer.name,
            "alpha1": self.tracker.alpha1,
            "alpha2": self.tracker.alpha2,
            "knowledge_mode": self.knowledge_mode,
            "use_intent": self.use_intent,
            "max_history_chars": self.max_history_chars,
        }


@dataclass
class Session:
    id: str
    recipe: Recipe
    config: SessionConfig
    turns: list[Turn] = field(default_factory=list)
    state: int = 0
    last_intents: frozenset[int] | None = None
    created_at: str = ""
    updated_at: str = ""

    def view(self) -> dict:
        """Client-facing session snapshot. Never includes backend credentials."""
        return {
            "id": self.id,
            "recipe_id": self.recipe.id,
            "recipe_title": self.recipe.title,
            "history": [turn_to_dict(t) for t in self.turns],
            "state": self.state,
            "last_intents": sorted(self.last_intents) if self.last_intents else [],
            "config": self.config.to_dict(),
            "created_at": self.created_at,
            "updated_at": self.updated_at,
        }


def _entry_dict(entry: IntentEntry) -> dict:
    return {"id": entry.id, "name": entry.name, "description": entry.description}


@dataclass(frozen=True)
class ChatResponse:
    reply: str
    intents: tuple[dict, ...]
    state: int
    selected_steps: tuple[int, ...]
    warning: str | None = None
    debug: dict | None = None

    def to_dict(self) -> dict:
        out = {
            "reply": self.reply,
            "intents": list(self.intents),
            "state": self.state,
            "selected_steps": list(self.selected_steps),
            "warning": self.warning,
        }
        if self.debug is not None:
            out["debug"] = self.debug
        return out


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


_OVERRIDE_KEYS = {"alpha1", "alpha2", "knowledge_mode", "use_intent", "max_history_chars"}


class SessionStore:
    """In-memory session registry with per-session message serialization."""

    def __init__(
        self,
        recipes: Sequence[Recipe],
        backend: CompletionBackend,
        catalog: IntentCatalog | None = None,
        defaults: SessionConfig | None = None,
    ) -> None:
        self._recipes: dict[str, Recipe] = {}
        for recipe in recipes:
            if recipe.id in self._recipes:
                raise ValueError(f"duplicate recipe id {recipe.id!r}")
            self._recipes[recipe.id] = recipe
        self._backend = backend
        self._catalog = catalog or IntentCatalog.default()
        self._defaults = defaults or SessionConfig(tracker=TrackerConfig())
        self._sessions: dict[str, Session] = {}
        self._session_locks: dict[str, threading.Lock] = {}
        self._store_lock = threading.RLock()

    @property
    def catalog(self) -> IntentCatalog:
        return self._catalog

    def recipes(self) -> list[Recipe]:
        return list(self._recipes.values())

    def recipe(self, recipe_id: str) -> Recipe:
        try:
            return self._recipes[recipe_id]
        except KeyError:
            raise RecipeNotFoundError(recipe_id) from None

    def _config_with_overrides(self, overrides: Mapping | None) -> SessionConfig:
        if not overrides:
            return self._defaults
        unknown = set(overrides) - _OVERRIDE_KEYS
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        tracker = self._defaults.tracker
        if "alpha1" in overrides or "alpha2" in overrides:
            tracker = replace(
                tracker,
                alpha1=float(overrides.get("alpha1", tracker.alpha1)),
                alpha2=float(overrides.get("alpha2", tracker.alpha2)),
            )
        return SessionConfig(
            tracker=tracker,
            knowledge_mode=overrides.get("knowledge_mode", self._defaults.knowledge_mode),
            use_intent=bool(overrides.get("use_intent", self._defaults.use_intent)),
            max_history_chars=overrides.get(
                "max_history_chars", self._defaults.max_history_chars
            ),
        )

    def create_session(
        self,
        recipe_id: str | None = None,
        recipe: Recipe | None = None,
        config_overrides: Mapping | None = None,
    ) -> Session:
        """Open a session for a served recipe (by id) or an inline recipe."""
        if (recipe_id is None) == (recipe is None):
            raise ValueError("provide exactly one of recipe_id or recipe")
        resolved = self.recipe(recipe_id) if recipe_id is not None else recipe
        assert resolved is not None
        config = self._config_with_overrides(config_overrides)
        now = _now()
        session = Session(
            id=uuid.uuid4().hex[:12],
            recipe=resolved,
            config=config,
            created_at=now,
            updated_at=now,
        )
        with self._store_lock:
            self._sessions[session.id] = session
            self._session_locks[session.id] = threading.Lock()
        logger.info("session %s opened for recipe %s", session.id, resolved.id)
        return session

    def get_session(self, session_id: str) -> Session:
        with self._store_lock:
            try:
                return self._sessions[session_id]
            except KeyError:
                raise SessionNotFoundError(session_id) from None

    def _lock_for(self, session_id: str) -> threading.Lock:
        with self._store_lock:
            if session_id not in self._session_locks:
                raise SessionNotFoundError(session_id)
            return self._session_locks[session_id]

    def post_message(self, session_id: str, text: str, debug: bool = False) -> ChatResponse:
        """Run one full pipeline round trip and append the exchange.

        The session is mutated only after intent detection, completion, and
        tracking have all succeeded, so backend failures leave it untouched.
        Concurrent messages to the same session are rejected, not queued.
        """
        if not text or not text.strip():
            raise ValueError("message text is empty")
        lock = self._lock_for(session_id)
        if not lock.acquire(blocking=False):
            raise SessionBusyError(session_id)
        try:
            session = self.get_session(session_id)
            config = session.config
            warning = None
            intents: frozenset[int] = frozenset()
            if config.use_intent:
                try:
                    prediction = detect_intents(
                        self._backend,
                        self._catalog,
                        session.turns,
                        text,
                        max_history_chars=config.max_history_chars,
                    )
                    intents = prediction.intents
                except IntentParseError as exc:
                    warning = f"intent output unparseable, continuing without intents: {exc}"
                    logger.warning("session %s: %s (raw=%r)", session_id, exc, exc.raw)
            user_turn = Turn(role="user", text=text)
            history = [*session.turns, user_turn]
            reply, prompt, selection = respond(
                session.recipe,
                history,
                session.state,
                intents,
                mode=config.knowledge_mode,
                use_intent=config.use_intent,
                backend=self._backend,
                catalog=self._catalog,
                max_history_chars=config.max_history_chars,
            )
            new_state = advance_state(session.state, reply, session.recipe, config.tracker)
            session.turns.append(user_turn)
            session.turns.append(Turn(role="system", text=reply))
            session.state = new_state
            session.last_intents = intents if intents else None
            session.updated_at = _now()
            debug_info = None
            if debug:
                scores = score_steps(reply, session.recipe, config.tracker.scorer)
                debug_info = {
                    "prompt": prompt.text,
                    "scores": [
                        {"step": s.step_index, "score": s.score, "micro_step": s.best_micro_step}
                        for s in scores
                    ],
                }
            return ChatResponse(
                reply=reply,
                intents=tuple(_entry_dict(self._catalog.entry(i)) for i in sorted(intents)),
                state=new_state,
                selected_steps=tuple(selection.step_indices),
                warning=warning,
                debug=debug_info,
            )
        finally:
            lock.release()

    # -- persistence --------------------------------------------------------

    def snapshot(self, path: str | Path) -> int:
        """Write all sessions to a JSON file. Returns the session count."""
        with self._store_lock:
            sessions = [self._session_dict(s) for s in self._sessions.values()]
        payload = {"version": SNAPSHOT_VERSION, "saved_at": _now(), "sessions": sessions}
        Path(path).write_text(json.dumps(payload, ensure_ascii=False, indent=2), "utf-8")
        return len(sessions)

    @staticmethod
    def _session_dict(session: Session) -> dict:
        return {
            "id": session.id,
            "recipe": recipe_to_dict(session.recipe),
            "turns": [turn_to_dict(t) for t in session.turns],
            "state": session.state,
            "last_intents": sorted(session.last_intents) if session.last_intents else None,
            "config": session.config.to_dict(),
            "created_at": session.created_at,
            "updated_at": session.updated_at,
        }

    def restore(self, path: str | Path) -> int:
        """Replace all sessions with a snapshot's. The store is untouched on error.

        Scorers are not serialized; restored tracker configs reuse this
        store's scorer with the snapshot's thresholds.
        """
        try:
            payload = json.loads(Path(path).read_text("utf-8"))
        except (OSError, ValueError) as exc:
            raise SnapshotError(f"cannot read snapshot: {exc}") from exc
        if not isinstance(payload, dict) or payload.get("version") != SNAPSHOT_VERSION:
            raise SnapshotError(f"unsupported snapshot version {payload.get('version')!r}")
        restored: dict[str, Session] = {}
        try:
            for raw in payload["sessions"]:
                recipe_raw = raw["recipe"]
                recipe = Recipe.from_step_texts(
                    recipe_raw["id"], recipe_raw["title"], recipe_raw["steps"]
                )
                config_raw = raw["config"]
                if config_raw["scorer"] != self._defaults.tracker.scorer.name:
                    logger.warning(
                        "snapshot session %s used scorer %r; restoring with %r",
                        raw["id"],
                        config_raw["scorer"],
                        self._defaults.tracker.scorer.name,
                    )
                config = SessionConfig(
                    tracker=replace(
                        self._defaults.tracker,
                        alpha1=float(config_raw["alpha1"]),
                        alpha2=float(config_raw["alpha2"]),
                    ),
                    knowledge_mode=config_raw["knowledge_mode"],
                    use_intent=bool(config_raw["use_intent"]),
                    max_history_chars=config_raw.get("max_history_chars"),
                )
                turns = [
                    Turn(
                        role=t["role"],
                        text=t["text"],
                        gold_intents=frozenset(t["gold_intents"]) if t.get("gold_intents") else None,
                        gold_state=t.get("gold_state"),
                    )
                    for t in raw["turns"]
                ]
                state = int(raw["state"])
                if not 0 <= state <= recipe.n_steps:
                    raise SnapshotError(
                        f"session {raw['id']!r} state {state} outside 0..{recipe.n_steps}"
                    )
                intents_raw = raw.get("last_intents")
                session = Session(
                    id=raw["id"],
                    recipe=recipe,
                    config=config,
                    turns=turns,
                    state=state,
                    last_intents=frozenset(intents_raw) if intents_raw else None,
                    created_at=raw.get("created_at", ""),
                    updated_at=raw.get("updated_at", ""),
                )
                if session.id in restored:
                    raise SnapshotError(f"duplicate session id {session.id!r}")
                restored[session.id] = session
        except SnapshotError:
            raise
        except (KeyError, TypeError, ValueError, CorpusError) as exc:
            raise SnapshotError(f"malformed snapshot: {exc!r}") from exc
        with self._store_lock:
            self._sessions = restored
            self._session_locks = {sid: threading.Lock() for sid in restored}
        return len(restored)


# ---------------------------------------------------------------------------
# HTTP layer
# ---------------------------------------------------------------------------


class RecipePayload(BaseModel):
    id: str
    title: str
    steps: list[str]


class CreateSessionRequest(BaseModel):
    recipe_id: str | None = None
    recipe: RecipePayload | None = None
    config: dict | None = None


class MessageRequest(BaseModel):
    text: str
    debug: bool = False


def create_app(store: SessionStore, static_dir: str | Path | None = None) -> FastAPI:
    """Wire the session store into a FastAPI app, optionally serving a UI."""
    app = FastAPI(title="cookalong", docs_url=None, redoc_url=None)

    @app.exception_handler(SessionNotFoundError)
    @app.exception_handler(RecipeNotFoundError)
    async def _not_found(request: Request, exc: Exception) -> JSONResponse:
        return JSONResponse(status_code=404, content={"detail": str(exc)})

    @app.exception_handler(SessionBusyError)
    async def _busy(request: Request, exc: SessionBusyError) -> JSONResponse:
        return JSONResponse(status_code=409, content={"detail": str(exc)})

    @app.exception_handler(BackendError)
    @app.exception_handler(ScorerUnavailableError)
    async def _backend_down(request: Request, exc: Exception) -> JSONResponse:
        return JSONResponse(status_code=502, content={"detail": str(exc)})

    @app.get("/recipes")
    def list_recipes() -> list[dict]:
        return [
            {"id": r.id, "title": r.title, "n_steps": r.n_steps} for r in store.recipes()
        ]

    @app.get("/recipes/{recipe_id}")
    def get_recipe(recipe_id: str) -> dict:
        return recipe_to_dict(store.recipe(recipe_id))

    @app.post("/sessions", status_code=201)
    def create_session(request: CreateSessionRequest) -> dict:
        recipe = None
        if request.recipe is not None:
            try:
                recipe = Recipe.from_step_texts(
                    request.recipe.id, request.recipe.title, request.recipe.steps
                )
            except CorpusError as exc:
                raise HTTPException(status_code=400, detail=str(exc)) from exc
        try:
            session = store.create_session(
                recipe_id=request.recipe_id, recipe=recipe, config_overrides=request.config
            )
        except RecipeNotFoundError:
            raise
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return session.view()

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str) -> dict:
        return store.get_session(session_id).view()

    @app.post("/sessions/{session_id}/messages")
    def post_message(session_id: str, request: MessageRequest) -> dict:
        try:
            response = store.post_message(session_id, request.text, debug=request.debug)
        except (SessionNotFoundError, SessionBusyError, BackendError, ScorerUnavailableError):
            raise
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return response.to_dict()

    if static_dir is not None:
        static_path = Path(static_dir)
        if static_path.is_dir():
            app.mount("/", StaticFiles(directory=static_path, html=True), name="ui")
        else:
            logger.warning("static dir %s does not exist; UI not mounted", static_path)
    return app
