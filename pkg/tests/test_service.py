"""Session store semantics and the HTTP API around it."""

import json

import pytest
from fastapi.testclient import TestClient

from cookalong.corpus import Recipe
from cookalong.generation import BackendError, StubBackend
from cookalong.service import (
    SessionBusyError,
    SessionConfig,
    SessionNotFoundError,
    SessionStore,
    SnapshotError,
    create_app,
)
from cookalong.tracker import TrackerConfig


def make_store(recipe, template="{first_knowledge_sentence}", backend=None, **config):
    defaults = SessionConfig(tracker=TrackerConfig(), **config)
    return SessionStore(
        recipes=[recipe],
        backend=backend or StubBackend(template=template),
        defaults=defaults,
    )


class FailingBackend:
    kind = "failing"

    def complete(self, prompt, context=None):
        raise BackendError("model down", status=503)


class IntentOnlyBackend:
    """Answers intent prompts but fails on generation prompts."""

    kind = "intent-only"

    def complete(self, prompt, context=None):
        if "<|Knowledge|>" in prompt:
            raise BackendError("generator down", status=503)
        return "[intents] 16"


# -- store ---------------------------------------------------------------------


def test_create_session_defaults(recipe):
    store = make_store(recipe)
    session = store.create_session(recipe_id=recipe.id)
    assert session.state == 0
    assert session.turns == []
    assert session.created_at == session.updated_at
    assert store.get_session(session.id) is session


def test_create_session_argument_validation(recipe):
    store = make_store(recipe)
    with pytest.raises(ValueError):
        store.create_session()
    with pytest.raises(ValueError):
        store.create_session(recipe_id=recipe.id, recipe=recipe)
    with pytest.raises(KeyError):
        store.create_session(recipe_id="ghost")


def test_create_session_config_overrides(recipe):
    store = make_store(recipe)
    session = store.create_session(
        recipe_id=recipe.id,
        config_overrides={"alpha1": 0.25, "knowledge_mode": "center", "use_intent": True},
    )
    assert session.config.tracker.alpha1 == 0.25
    assert session.config.tracker.alpha2 == 0.3
    assert session.config.knowledge_mode == "center"
    assert session.config.use_intent is True
    # Defaults object is untouched.
    assert store._defaults.tracker.alpha1 == 0.2


def test_create_session_rejects_bad_overrides(recipe):
    store = make_store(recipe)
    with pytest.raises(ValueError):
        store.create_session(recipe_id=recipe.id, config_overrides={"alpha1": 0.5, "alpha2": 0.4})
    with pytest.raises(ValueError, match="unknown config keys"):
        store.create_session(recipe_id=recipe.id, config_overrides={"alphaone": 0.5})
    with pytest.raises(ValueError):
        store.create_session(recipe_id=recipe.id, config_overrides={"knowledge_mode": "all"})


def test_post_message_happy_path(recipe):
    store = make_store(recipe)
    session = store.create_session(recipe_id=recipe.id)
    response = store.post_message(session.id, "What is the first step?")
    assert response.reply == recipe.steps[0].micro_steps[0]
    assert response.state == 1  # reply matches step 1 exactly
    assert response.selected_steps == (1, 2, 3, 4, 5, 6)
    assert response.warning is None
    assert response.debug is None
    assert [t.role for t in session.turns] == ["user", "system"]
    assert session.state == 1


def test_post_message_with_intent_detection(recipe, catalog):
    store = make_store(recipe, template="{first_knowledge_sentence} [intents] 16", use_intent=True)
    session = store.create_session(recipe_id=recipe.id)
    response = store.post_message(session.id, "What tool should I use?")
    assert [i["name"] for i in response.intents] == ["req_tool"]
    assert response.intents[0]["description"] == catalog.entry(16).description
    assert session.last_intents == frozenset({16})
    assert "[intents] 16" in response.reply  # template applied to generation too


def test_post_message_warns_on_unparseable_intent_output(recipe):
    store = make_store(recipe, use_intent=True)  # stub yields "" for intent prompts
    session = store.create_session(recipe_id=recipe.id)
    response = store.post_message(session.id, "hello")
    assert response.warning is not None
    assert response.intents == ()
    assert response.reply == recipe.steps[0].micro_steps[0]


def test_post_message_validates_text(recipe):
    store = make_store(recipe)
    session = store.create_session(recipe_id=recipe.id)
    with pytest.raises(ValueError):
        store.post_message(session.id, "   ")
    with pytest.raises(SessionNotFoundError):
        store.post_message("ghost", "hi")


def test_post_message_busy_session_is_rejected(recipe):
    store = make_store(recipe)
    session = store.create_session(recipe_id=recipe.id)
    lock = store._lock_for(session.id)
    assert lock.acquire(blocking=False)
    try:
        with pytest.raises(SessionBusyError):
            store.post_message(session.id, "hi")
    finally:
        lock.release()
    # Afterwards the session accepts messages again.
    assert store.post_message(session.id, "hi").state == 1


def test_backend_failure_leaves_session_untouched(recipe):
    store = make_store(recipe, backend=FailingBackend())
    session = store.create_session(recipe_id=recipe.id)
    with pytest.raises(BackendError):
        store.post_message(session.id, "hi")
    assert session.turns == []
    assert session.state == 0


def test_generation_failure_after_intent_success_rolls_back(recipe):
    store = make_store(recipe, backend=IntentOnlyBackend(), use_intent=True)
    session = store.create_session(recipe_id=recipe.id)
    with pytest.raises(BackendError):
        store.post_message(session.id, "What tool should I use?")
    assert session.turns == []
    assert session.state == 0
    assert session.last_intents is None


def test_post_message_debug_payload(recipe):
    store = make_store(recipe)
    session = store.create_session(recipe_id=recipe.id)
    response = store.post_message(session.id, "hi", debug=True)
    assert response.debug is not None
    assert response.debug["prompt"].endswith("=> [system] ")
    assert len(response.debug["scores"]) == recipe.n_steps
    assert response.debug["scores"][0]["step"] == 1


def test_session_view_shape(recipe):
    store = make_store(recipe)
    session = store.create_session(recipe_id=recipe.id)
    store.post_message(session.id, "hi")
    view = session.view()
    assert view["recipe_id"] == recipe.id
    assert view["state"] == 1
    assert [t["role"] for t in view["history"]] == ["user", "system"]
    assert view["config"]["scorer"] == "wordmatch"
    assert view["config"]["alpha1"] == 0.2
    # No backend details leak into the view.
    assert "backend" not in json.dumps(view)


# -- snapshots -------------------------------------------------------------------


def test_snapshot_restore_round_trip(recipe, tmp_path):
    store = make_store(recipe)
    session = store.create_session(recipe_id=recipe.id)
    store.post_message(session.id, "What is the first step?")
    store.post_message(session.id, "And then?")
    path = tmp_path / "sessions.json"
    assert store.snapshot(path) == 1

    fresh = make_store(recipe)
    assert fresh.restore(path) == 1
    restored = fresh.get_session(session.id)
    assert restored.view() == session.view()
    # Restored sessions accept new messages.
    fresh.post_message(session.id, "keep going")


def test_restore_replaces_existing_sessions(recipe, tmp_path):
    store = make_store(recipe)
    store.create_session(recipe_id=recipe.id)
    path = tmp_path / "sessions.json"
    store.snapshot(path)
    other = make_store(recipe)
    orphan = other.create_session(recipe_id=recipe.id)
    other.restore(path)
    with pytest.raises(SessionNotFoundError):
        other.get_session(orphan.id)


def test_restore_rejects_bad_snapshots(recipe, tmp_path):
    store = make_store(recipe)
    keeper = store.create_session(recipe_id=recipe.id)

    bad = tmp_path / "bad.json"
    bad.write_text("{broken")
    with pytest.raises(SnapshotError):
        store.restore(bad)

    bad.write_text(json.dumps({"version": 99, "sessions": []}))
    with pytest.raises(SnapshotError, match="version"):
        store.restore(bad)

    bad.write_text(
        json.dumps(
            {
                "version": 1,
                "sessions": [
                    {
                        "id": "s1",
                        "recipe": {"id": "r", "title": "T", "steps": ["Boil."]},
                        "turns": [],
                        "state": 5,
                        "last_intents": None,
                        "config": {
                            "scorer": "wordmatch",
                            "alpha1": 0.2,
                            "alpha2": 0.3,
                            "knowledge_mode": "full",
                            "use_intent": False,
                            "max_history_chars": None,
                        },
                    }
                ],
            }
        )
    )
    with pytest.raises(SnapshotError, match="outside"):
        store.restore(bad)
    # Failed restores never clobber live sessions.
    assert store.get_session(keeper.id) is keeper


def test_snapshot_never_contains_auth_material(recipe, tmp_path, monkeypatch):
    monkeypatch.setenv("LLM_TOKEN", "super-secret-token")
    store = make_store(recipe)
    session = store.create_session(recipe_id=recipe.id)
    store.post_message(session.id, "hi")
    path = tmp_path / "sessions.json"
    store.snapshot(path)
    assert "super-secret-token" not in path.read_text()


# -- HTTP API --------------------------------------------------------------------


@pytest.fixture()
def client(recipe):
    store = make_store(recipe)
    return TestClient(create_app(store)), store


def test_http_recipe_endpoints(client, recipe):
    http, _ = client
    listing = http.get("/recipes").json()
    assert listing == [{"id": recipe.id, "title": recipe.title, "n_steps": 6}]
    full = http.get(f"/recipes/{recipe.id}").json()
    assert full["steps"][0] == recipe.steps[0].text
    assert http.get("/recipes/ghost").status_code == 404


def test_http_session_lifecycle(client, recipe):
    http, _ = client
    created = http.post("/sessions", json={"recipe_id": recipe.id})
    assert created.status_code == 201
    sid = created.json()["id"]
    assert created.json()["state"] == 0

    sent = http.post(f"/sessions/{sid}/messages", json={"text": "What is the first step?"})
    assert sent.status_code == 200
    body = sent.json()
    assert body["reply"] == recipe.steps[0].micro_steps[0]
    assert body["state"] == 1
    assert body["selected_steps"] == [1, 2, 3, 4, 5, 6]
    assert "debug" not in body

    view = http.get(f"/sessions/{sid}").json()
    assert view["state"] == 1
    assert len(view["history"]) == 2


def test_http_inline_recipe_session(client):
    http, _ = client
    created = http.post(
        "/sessions",
        json={"recipe": {"id": "inline", "title": "Inline", "steps": ["Boil water. Serve."]}},
    )
    assert created.status_code == 201
    sid = created.json()["id"]
    reply = http.post(f"/sessions/{sid}/messages", json={"text": "go"}).json()["reply"]
    assert reply == "Boil water."


def test_http_validation_errors(client, recipe):
    http, _ = client
    assert http.post("/sessions", json={"recipe_id": "ghost"}).status_code == 404
    assert http.post("/sessions", json={}).status_code == 400
    assert (
        http.post(
            "/sessions",
            json={"recipe": {"id": "x", "title": "X", "steps": []}},
        ).status_code
        == 400
    )
    assert (
        http.post(
            "/sessions",
            json={"recipe_id": recipe.id, "config": {"alpha1": 0.9, "alpha2": 0.1}},
        ).status_code
        == 400
    )
    sid = http.post("/sessions", json={"recipe_id": recipe.id}).json()["id"]
    assert http.post(f"/sessions/{sid}/messages", json={"text": "  "}).status_code == 400
    assert http.get("/sessions/ghost").status_code == 404
    assert http.post("/sessions/ghost/messages", json={"text": "hi"}).status_code == 404


def test_http_busy_session_returns_409(client, recipe):
    http, store = client
    sid = http.post("/sessions", json={"recipe_id": recipe.id}).json()["id"]
    lock = store._lock_for(sid)
    assert lock.acquire(blocking=False)
    try:
        response = http.post(f"/sessions/{sid}/messages", json={"text": "hi"})
        assert response.status_code == 409
    finally:
        lock.release()


def test_http_backend_failure_returns_502(recipe):
    store = SessionStore(
        recipes=[recipe],
        backend=FailingBackend(),
        defaults=SessionConfig(tracker=TrackerConfig()),
    )
    http = TestClient(create_app(store))
    sid = http.post("/sessions", json={"recipe_id": recipe.id}).json()["id"]
    response = http.post(f"/sessions/{sid}/messages", json={"text": "hi"})
    assert response.status_code == 502
    assert http.get(f"/sessions/{sid}").json()["history"] == []


def test_http_debug_flag(client, recipe):
    http, _ = client
    sid = http.post("/sessions", json={"recipe_id": recipe.id}).json()["id"]
    body = http.post(f"/sessions/{sid}/messages", json={"text": "hi", "debug": True}).json()
    assert "<|Knowledge|>" in body["debug"]["prompt"]
    assert len(body["debug"]["scores"]) == recipe.n_steps


def test_http_serves_static_ui(recipe, tmp_path):
    (tmp_path / "index.html").write_text("<h1>cook UI</h1>")
    store = make_store(recipe)
    http = TestClient(create_app(store, static_dir=tmp_path))
    assert "cook UI" in http.get("/").text
    # API routes still win over the static mount.
    assert http.get("/recipes").status_code == 200


def test_missing_static_dir_is_tolerated(recipe, tmp_path):
    store = make_store(recipe)
    http = TestClient(create_app(store, static_dir=tmp_path / "absent"))
    assert http.get("/recipes").status_code == 200
