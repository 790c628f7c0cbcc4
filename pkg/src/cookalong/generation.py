"""Knowledge selection, generation-prompt assembly, and completion backends.

A generation prompt concatenates the rendered dialog history, the selected
recipe steps, an optional intent clause, and the response marker:

    {history} <|Knowledge|> {knowledge}[ [user] wants to: {description}.] => [system]

The completion backend behind it is pluggable: a deterministic stub for tests
and offline runs, or an HTTP completion endpoint.
"""

from __future__ import annotations

import logging
import os
import time
from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterable, Literal, Mapping, Protocol, Sequence

import httpx

from .corpus import Recipe, RecipeStep, Turn, split_sentences

if TYPE_CHECKING:
    from .intent import IntentCatalog

logger = logging.getLogger(__name__)

KNOWLEDGE_INFIX = " <|Knowledge|> "
RESPONSE_SUFFIX = " => [system] "
# One constant so the wording ("wants to:" vs "want to:") can be flipped in one place.
INTENT_CLAUSE = "[user] wants to:"

KnowledgeMode = Literal["full", "cutoff", "center"]

KNOWLEDGE_MODES: tuple[KnowledgeMode, ...] = ("full", "cutoff", "center")


@dataclass(frozen=True)
class KnowledgeSelection:
    mode: KnowledgeMode
    selected: tuple[RecipeStep, ...]

    @property
    def step_indices(self) -> list[int]:
        return [s.index for s in self.selected]


def select_knowledge(recipe: Recipe, state: int, mode: KnowledgeMode) -> KnowledgeSelection:
    """Pick the recipe steps the generator should condition on.

    full: every step. cutoff: the current step onward. center: a one-step
    window around the current step. The sentinel state 0 centers on step 1
    (and degrades cutoff to the full recipe).
    """
    if not 0 <= state <= recipe.n_steps:
        raise ValueError(f"state {state} outside 0..{recipe.n_steps}")
    if mode == "full":
        selected = recipe.steps
    elif mode == "cutoff":
        selected = recipe.steps[max(state, 1) - 1 :]
    elif mode == "center":
        current = max(state, 1)
        lo = max(1, current - 1)
        hi = min(recipe.n_steps, current + 1)
        selected = recipe.steps[lo - 1 : hi]
    else:
        raise ValueError(f"unknown knowledge mode {mode!r}")
    return KnowledgeSelection(mode=mode, selected=tuple(selected))


def format_history(turns: Sequence[Turn]) -> str:
    """Render turns as space-joined "[role] text" segments."""
    return " ".join(f"[{t.role}] {t.text}" for t in turns)


def truncate_history(turns: Sequence[Turn], max_chars: int | None) -> list[Turn]:
    """Drop oldest turns until the rendered history fits the character budget.

    The most recent turn is always kept.
    """
    kept = list(turns)
    if max_chars is None:
        return kept
    while len(kept) > 1 and len(format_history(kept)) > max_chars:
        kept.pop(0)
    return kept


def format_knowledge(selection: KnowledgeSelection) -> str:
    """Render selected steps as space-joined "- {step text}" segments."""
    if not selection.selected:
        raise ValueError("knowledge selection is empty")
    return " ".join(f"- {s.text}" for s in selection.selected)


@dataclass(frozen=True)
class GenerationPrompt:
    text: str
    history_part: str
    knowledge_part: str
    intent_part: str | None  # includes its leading space when present


def build_prompt(
    history: Sequence[Turn],
    selection: KnowledgeSelection,
    intent_description: str | None = None,
    max_history_chars: int | None = None,
) -> GenerationPrompt:
    """Assemble the full backend prompt. Pure; identical inputs give identical bytes."""
    history_part = format_history(truncate_history(history, max_history_chars))
    knowledge_part = format_knowledge(selection)
    intent_part = None
    if intent_description is not None:
        description = intent_description
        if not description.endswith("."):
            description += "."
        intent_part = f" {INTENT_CLAUSE} {description}"
    text = history_part + KNOWLEDGE_INFIX + knowledge_part + (intent_part or "") + RESPONSE_SUFFIX
    return GenerationPrompt(
        text=text,
        history_part=history_part,
        knowledge_part=knowledge_part,
        intent_part=intent_part,
    )


# ---------------------------------------------------------------------------
# Completion backends
# ---------------------------------------------------------------------------


class BackendError(RuntimeError):
    """Completion backend failure (transport, HTTP status, or bad payload)."""

    def __init__(self, message: str, status: int | None = None) -> None:
        super().__init__(message)
        self.status = status


class CompletionBackend(Protocol):
    """Maps a text prompt to a text continuation."""

    kind: str

    def complete(self, prompt: str, context: Mapping[str, str] | None = None) -> str: ...


def _first_knowledge_sentence(prompt: str) -> str:
    if KNOWLEDGE_INFIX not in prompt:
        return ""
    knowledge = prompt.split(KNOWLEDGE_INFIX, 1)[1]
    for stop in (f" {INTENT_CLAUSE} ", RESPONSE_SUFFIX):
        idx = knowledge.find(stop)
        if idx != -1:
            knowledge = knowledge[:idx]
    knowledge = knowledge.strip()
    if knowledge.startswith("- "):
        knowledge = knowledge[2:]
    # Steps are rendered as "- {text}" joined by spaces; keep only the first.
    idx = knowledge.find(" - ")
    if idx != -1:
        knowledge = knowledge[:idx]
    sentences = split_sentences(knowledge)
    return sentences[0] if sentences else knowledge


class StubBackend:
    """Deterministic template backend for tests, demos, and offline runs.

    The template may use {first_knowledge_sentence} (parsed from the prompt),
    plus {state} and {intent_names} when the caller supplies them via context.
    """

    kind = "stub"

    PLACEHOLDERS = ("first_knowledge_sentence", "state", "intent_names")

    def __init__(self, template: str = "{first_knowledge_sentence}") -> None:
        self.template = template

    def complete(self, prompt: str, context: Mapping[str, str] | None = None) -> str:
        values = {name: "" for name in self.PLACEHOLDERS}
        values["first_knowledge_sentence"] = _first_knowledge_sentence(prompt)
        if context:
            for key, value in context.items():
                if key in values:
                    values[key] = str(value)
        out = self.template
        for key, value in values.items():
            out = out.replace("{" + key + "}", value)
        return out


class HttpCompletionBackend:
    """Client for a POST {base_url}/completions endpoint.

    Sends {"model", "prompt", "max_tokens", "temperature"} and expects
    {"text": str}. The bearer token is read from the environment variable
    named by auth_env; config files never hold raw credentials. Transport
    errors are retried with exponential backoff; HTTP error statuses are not.
    """

    kind = "http"

    def __init__(
        self,
        base_url: str,
        model: str,
        auth_env: str | None = None,
        timeout: float = 30.0,
        max_tokens: int = 256,
        temperature: float = 0.0,
        max_retries: int = 2,
        backoff: float = 0.5,
        client: httpx.Client | None = None,
    ) -> None:
        if timeout <= 0:
            raise ValueError("timeout must be positive")
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.auth_env = auth_env
        self.timeout = timeout
        self.max_tokens = max_tokens
        self.temperature = temperature
        self.max_retries = max_retries
        self.backoff = backoff
        self._client = client or httpx.Client(timeout=timeout)

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(self.auth_env, "") if self.auth_env else ""
        if token:
            headers["Authorization"] = f"Bearer {token}"
        return headers

    def complete(self, prompt: str, context: Mapping[str, str] | None = None) -> str:
        payload = {
            "model": self.model,
            "prompt": prompt,
            "max_tokens": self.max_tokens,
            "temperature": self.temperature,
        }
        url = f"{self.base_url}/completions"
        response = None
        for attempt in range(self.max_retries + 1):
            try:
                response = self._client.post(url, json=payload, headers=self._headers())
                break
            except httpx.TransportError as exc:
                if attempt == self.max_retries:
                    raise BackendError(f"backend transport error: {exc}") from exc
                delay = self.backoff * (2**attempt)
                logger.warning("backend transport error (%s), retrying in %.1fs", exc, delay)
                time.sleep(delay)
        assert response is not None
        if response.status_code // 100 != 2:
            excerpt = response.text[:200]
            raise BackendError(
                f"backend returned {response.status_code}: {excerpt}",
                status=response.status_code,
            )
        try:
            text = response.json()["text"]
        except (KeyError, ValueError) as exc:
            raise BackendError(f"malformed backend response: {exc}") from exc
        if not isinstance(text, str):
            raise BackendError("malformed backend response: 'text' is not a string")
        if text.startswith(prompt):
            text = text[len(prompt) :]
        if not text.strip():
            raise BackendError("backend returned an empty completion")
        return text


def complete(
    backend: CompletionBackend, prompt: str, context: Mapping[str, str] | None = None
) -> str:
    """Run one completion. The prompt must be non-empty."""
    if not prompt:
        raise ValueError("prompt is empty")
    return backend.complete(prompt, context=context)


def backend_from_config(config: Mapping) -> CompletionBackend:
    """Build a backend from a config mapping ({"kind": "stub"|"http", ...})."""
    kind = config.get("kind")
    if kind == "stub":
        return StubBackend(template=config.get("template", "{first_knowledge_sentence}"))
    if kind == "http":
        try:
            return HttpCompletionBackend(
                base_url=config["base_url"],
                model=config["model"],
                auth_env=config.get("auth_env"),
                timeout=config.get("timeout", 30.0),
                max_tokens=config.get("max_tokens", 256),
                temperature=config.get("temperature", 0.0),
            )
        except KeyError as exc:
            raise ValueError(f"http backend config missing field {exc}") from exc
    raise ValueError(f"unknown backend kind {kind!r}")


# ---------------------------------------------------------------------------
# Pipeline composition
# ---------------------------------------------------------------------------


def respond(
    recipe: Recipe,
    history: Sequence[Turn],
    state: int,
    intents: Iterable[int] | None = None,
    *,
    mode: KnowledgeMode = "full",
    use_intent: bool = False,
    backend: CompletionBackend,
    catalog: "IntentCatalog | None" = None,
    max_history_chars: int | None = None,
) -> tuple[str, GenerationPrompt, KnowledgeSelection]:
    """Select knowledge, build the prompt, and complete a reply.

    Returns the reply together with the prompt and selection for debugging.
    Multiple detected intents are joined into one "wants to:" clause.
    """
    selection = select_knowledge(recipe, state, mode)
    intent_description = None
    intent_names: list[str] = []
    if use_intent and intents:
        if catalog is None:
            raise ValueError("use_intent requires an intent catalog")
        entries = [catalog.entry(i) for i in sorted(intents)]
        intent_names = [e.name for e in entries]
        intent_description = "; ".join(e.description for e in entries)
    prompt = build_prompt(
        history, selection, intent_description, max_history_chars=max_history_chars
    )
    context = {"state": str(state), "intent_names": ", ".join(intent_names)}
    reply = complete(backend, prompt.text, context=context)
    return reply, prompt, selection
