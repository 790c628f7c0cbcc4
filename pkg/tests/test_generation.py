"""Knowledge selection, prompt assembly, and completion backends."""

import json

import httpx
import pytest

from cookalong.corpus import Recipe, Turn
from cookalong.generation import (
    BackendError,
    HttpCompletionBackend,
    KnowledgeSelection,
    StubBackend,
    backend_from_config,
    build_prompt,
    complete,
    format_history,
    format_knowledge,
    respond,
    select_knowledge,
    truncate_history,
)

# -- knowledge selection ----------------------------------------------------


def _indices(recipe, state, mode):
    return select_knowledge(recipe, state, mode).step_indices


def test_full_selection_keeps_every_step(recipe):
    assert _indices(recipe, 0, "full") == [1, 2, 3, 4, 5, 6]
    assert _indices(recipe, 4, "full") == [1, 2, 3, 4, 5, 6]


def test_cutoff_selection(recipe):
    assert _indices(recipe, 0, "cutoff") == [1, 2, 3, 4, 5, 6]
    assert _indices(recipe, 1, "cutoff") == [1, 2, 3, 4, 5, 6]
    assert _indices(recipe, 3, "cutoff") == [3, 4, 5, 6]
    assert _indices(recipe, 6, "cutoff") == [6]


def test_center_selection(recipe):
    assert _indices(recipe, 0, "center") == [1, 2]
    assert _indices(recipe, 1, "center") == [1, 2]
    assert _indices(recipe, 3, "center") == [2, 3, 4]
    assert _indices(recipe, 6, "center") == [5, 6]


def test_selection_on_single_step_recipe():
    tiny = Recipe.from_step_texts("t", "Tiny", ["Serve."])
    for mode in ("full", "cutoff", "center"):
        assert _indices(tiny, 0, mode) == [1]
        assert _indices(tiny, 1, mode) == [1]


def test_selection_validates_inputs(recipe):
    with pytest.raises(ValueError):
        select_knowledge(recipe, -1, "full")
    with pytest.raises(ValueError):
        select_knowledge(recipe, 7, "full")
    with pytest.raises(ValueError, match="unknown knowledge mode"):
        select_knowledge(recipe, 0, "everything")


# -- history and knowledge rendering ----------------------------------------


def test_format_history_matches_golden(turns, golden):
    assert format_history(turns[:5]) == golden("history_five_turns.txt")
    assert format_history([]) == ""


def test_truncate_history_drops_oldest_first():
    history = [Turn(role="user", text="aa"), Turn(role="user", text="bb")]
    assert truncate_history(history, None) == history
    assert truncate_history(history, 19) == history  # exactly fits
    assert truncate_history(history, 18) == history[1:]
    # The most recent turn survives even an impossible budget.
    assert truncate_history(history, 3) == history[1:]


def test_format_knowledge_matches_worked_example(recipe, worked_example):
    selection = select_knowledge(recipe, 0, "full")
    assert format_knowledge(selection) == worked_example["knowledge_part"]


def test_format_knowledge_rejects_empty_selection():
    with pytest.raises(ValueError):
        format_knowledge(KnowledgeSelection(mode="full", selected=()))


# -- prompt assembly ---------------------------------------------------------


def test_build_prompt_matches_golden(recipe, turns, worked_example, golden):
    selection = select_knowledge(recipe, 0, "full")
    prompt = build_prompt(turns, selection, worked_example["intent_description"])
    assert prompt.text == golden("generation_prompt_full.txt")


def test_prompt_is_exact_concatenation_of_parts(recipe, turns):
    selection = select_knowledge(recipe, 2, "cutoff")
    prompt = build_prompt(turns, selection, "greeting")
    assert prompt.text == (
        prompt.history_part
        + " <|Knowledge|> "
        + prompt.knowledge_part
        + prompt.intent_part
        + " => [system] "
    )


def test_prompt_without_intent_has_no_clause(recipe, turns):
    prompt = build_prompt(turns, select_knowledge(recipe, 0, "full"))
    assert prompt.intent_part is None
    assert "wants to:" not in prompt.text


def test_intent_clause_gets_exactly_one_period(recipe, turns):
    selection = select_knowledge(recipe, 0, "full")
    assert build_prompt(turns, selection, "greeting").intent_part == " [user] wants to: greeting."
    assert build_prompt(turns, selection, "greeting.").intent_part == " [user] wants to: greeting."


# -- stub backend ------------------------------------------------------------


def test_stub_returns_first_knowledge_sentence(recipe, turns, golden):
    reply = StubBackend().complete(golden("generation_prompt_full.txt"))
    assert reply == "Peel the potatoes."


def test_stub_first_sentence_follows_selection(recipe, turns):
    selection = select_knowledge(recipe, 3, "cutoff")
    prompt = build_prompt(turns, selection)
    assert StubBackend().complete(prompt.text) == recipe.steps[2].micro_steps[0]


def test_stub_context_placeholders():
    stub = StubBackend(template="state={state} intents={intent_names}")
    assert stub.complete("prompt", context={"state": "3", "intent_names": "req_tool"}) == (
        "state=3 intents=req_tool"
    )
    assert stub.complete("prompt") == "state= intents="


def test_stub_leaves_unknown_placeholders_alone():
    assert StubBackend(template="{foo} {state}").complete("p", context={"state": "1"}) == "{foo} 1"


def test_stub_on_knowledge_free_prompt():
    assert StubBackend().complete("[user] hi => [system] ") == ""


def test_complete_rejects_empty_prompt():
    with pytest.raises(ValueError):
        complete(StubBackend(), "")


# -- HTTP backend ------------------------------------------------------------


def _http_backend(handler, **kwargs):
    client = httpx.Client(transport=httpx.MockTransport(handler))
    kwargs.setdefault("backoff", 0.0)
    return HttpCompletionBackend("http://llm.test/v1", "test-model", client=client, **kwargs)


def test_http_backend_posts_completion_payload():
    seen = {}

    def handler(request):
        seen["url"] = str(request.url)
        seen["payload"] = json.loads(request.content)
        return httpx.Response(200, json={"text": "A reply."})

    backend = _http_backend(handler, max_tokens=128, temperature=0.5)
    assert backend.complete("a prompt") == "A reply."
    assert seen["url"] == "http://llm.test/v1/completions"
    assert seen["payload"] == {
        "model": "test-model",
        "prompt": "a prompt",
        "max_tokens": 128,
        "temperature": 0.5,
    }


def test_http_backend_strips_prompt_echo():
    def handler(request):
        prompt = json.loads(request.content)["prompt"]
        return httpx.Response(200, json={"text": prompt + " continued"})

    assert _http_backend(handler).complete("start") == " continued"


def test_http_backend_retries_transport_errors():
    calls = {"n": 0}

    def handler(request):
        calls["n"] += 1
        if calls["n"] < 3:
            raise httpx.ConnectError("down")
        return httpx.Response(200, json={"text": "ok"})

    assert _http_backend(handler, max_retries=2).complete("p") == "ok"
    assert calls["n"] == 3


def test_http_backend_gives_up_after_retries():
    def handler(request):
        raise httpx.ConnectError("down")

    with pytest.raises(BackendError, match="transport"):
        _http_backend(handler, max_retries=1).complete("p")


def test_http_backend_does_not_retry_http_errors():
    calls = {"n": 0}

    def handler(request):
        calls["n"] += 1
        return httpx.Response(404, text="missing model")

    with pytest.raises(BackendError) as exc_info:
        _http_backend(handler, max_retries=2).complete("p")
    assert exc_info.value.status == 404
    assert calls["n"] == 1


def test_http_backend_rejects_malformed_responses():
    cases = [
        httpx.Response(200, text="not json"),
        httpx.Response(200, json={"output": "x"}),
        httpx.Response(200, json={"text": 42}),
        httpx.Response(200, json={"text": "   "}),
    ]
    for canned in cases:
        with pytest.raises(BackendError):
            _http_backend(lambda request, c=canned: c).complete("p")


def test_http_backend_sends_bearer_token(monkeypatch):
    monkeypatch.setenv("LLM_TOKEN", "tok")
    seen = {}

    def handler(request):
        seen["auth"] = request.headers.get("authorization")
        return httpx.Response(200, json={"text": "ok"})

    _http_backend(handler, auth_env="LLM_TOKEN").complete("p")
    assert seen["auth"] == "Bearer tok"


def test_http_backend_validates_timeout():
    with pytest.raises(ValueError):
        HttpCompletionBackend("http://llm.test", "m", timeout=0)


# -- backend config ----------------------------------------------------------


def test_backend_from_config_stub():
    backend = backend_from_config({"kind": "stub"})
    assert isinstance(backend, StubBackend)
    backend = backend_from_config({"kind": "stub", "template": "hi"})
    assert backend.template == "hi"


def test_backend_from_config_http():
    backend = backend_from_config(
        {"kind": "http", "base_url": "http://llm.test/", "model": "m", "auth_env": "T"}
    )
    assert isinstance(backend, HttpCompletionBackend)
    assert backend.base_url == "http://llm.test"
    assert backend.auth_env == "T"


def test_backend_from_config_errors():
    with pytest.raises(ValueError, match="missing field"):
        backend_from_config({"kind": "http", "base_url": "http://llm.test"})
    with pytest.raises(ValueError, match="unknown backend kind"):
        backend_from_config({"kind": "quantum"})


# -- respond -----------------------------------------------------------------


def test_respond_full_pipeline(recipe, turns, catalog):
    reply, prompt, selection = respond(
        recipe, turns, 0, backend=StubBackend(), catalog=catalog
    )
    assert reply == recipe.steps[0].micro_steps[0]
    assert selection.step_indices == [1, 2, 3, 4, 5, 6]
    assert prompt.intent_part is None


def test_respond_with_intents_joins_descriptions(recipe, turns, catalog):
    reply, prompt, _ = respond(
        recipe,
        turns,
        0,
        intents={16, 3},
        use_intent=True,
        backend=StubBackend(template="{intent_names}"),
        catalog=catalog,
    )
    assert prompt.intent_part == (
        " [user] wants to: ask about cooking duration; ask about the cooking tool."
    )
    assert reply == "req_duration, req_tool"


def test_respond_ignores_intents_unless_enabled(recipe, turns, catalog):
    _, prompt, _ = respond(
        recipe, turns, 0, intents={16}, use_intent=False, backend=StubBackend(), catalog=catalog
    )
    assert prompt.intent_part is None


def test_respond_requires_catalog_for_intents(recipe, turns):
    with pytest.raises(ValueError, match="catalog"):
        respond(recipe, turns, 0, intents={1}, use_intent=True, backend=StubBackend())


def test_respond_honors_mode_and_state(recipe, turns, catalog):
    _, _, selection = respond(
        recipe, turns, 3, mode="center", backend=StubBackend(), catalog=catalog
    )
    assert selection.step_indices == [2, 3, 4]


def test_respond_passes_state_to_stub_context(recipe, turns, catalog):
    reply, _, _ = respond(
        recipe, turns, 4, backend=StubBackend(template="at step {state}"), catalog=catalog
    )
    assert reply == "at step 4"
