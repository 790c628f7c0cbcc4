"""User intent detection via description-indexed prompting.

Each intent is shown to the backend as "index:description"; the model answers
with "[intents] i j ..." and the indices are mapped back to canonical intent
ids. An optional permutation reorders the displayed catalog without changing
the canonical ids, which is how ordering-sensitivity experiments are run.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import Conversation, Turn
from .generation import CompletionBackend, complete, format_history, truncate_history

PREDICTION_MARKER = "[intents]"

_INT_RE = re.compile(r"-?\d+")


@dataclass(frozen=True)
class IntentEntry:
    id: int
    name: str
    description: str


@dataclass(frozen=True)
class IntentCatalog:
    """Ordered intent inventory with an optional display permutation.

    entries[i] always has canonical id i. When a permutation is set, display
    position d shows entries[permutation[d]], and predictions arriving in
    display space are mapped back through it.
    """

    entries: tuple[IntentEntry, ...]
    permutation: tuple[int, ...] | None = field(default=None)

    def __post_init__(self) -> None:
        if not self.entries:
            raise ValueError("intent catalog is empty")
        for i, entry in enumerate(self.entries):
            if entry.id != i:
                raise ValueError(f"entry at position {i} has id {entry.id}; ids must be 0..n-1 in order")
            if not entry.name or not entry.description:
                raise ValueError(f"intent {i} has an empty name or description")
        names = [e.name for e in self.entries]
        if len(set(names)) != len(names):
            raise ValueError("intent names must be unique")
        if self.permutation is not None and sorted(self.permutation) != list(range(len(self.entries))):
            raise ValueError("permutation must be a bijection over 0..n-1")

    @property
    def size(self) -> int:
        return len(self.entries)

    def entry(self, canonical_id: int) -> IntentEntry:
        if not 0 <= canonical_id < self.size:
            raise ValueError(f"intent id {canonical_id} outside 0..{self.size - 1}")
        return self.entries[canonical_id]

    def by_name(self, name: str) -> IntentEntry:
        for entry in self.entries:
            if entry.name == name:
                return entry
        raise ValueError(f"unknown intent name {name!r}")

    def display_order(self) -> tuple[IntentEntry, ...]:
        if self.permutation is None:
            return self.entries
        return tuple(self.entries[c] for c in self.permutation)

    def to_canonical(self, display_index: int) -> int:
        if not 0 <= display_index < self.size:
            raise ValueError(f"display index {display_index} outside 0..{self.size - 1}")
        if self.permutation is None:
            return display_index
        return self.permutation[display_index]

    def to_display(self, canonical_id: int) -> int:
        self.entry(canonical_id)
        if self.permutation is None:
            return canonical_id
        return self.permutation.index(canonical_id)

    def description_block(self) -> str:
        """Render "0:desc 1:desc ..." in display order."""
        return " ".join(f"{i}:{e.description}" for i, e in enumerate(self.display_order()))

    def with_permutation(self, permutation: Sequence[int] | None) -> "IntentCatalog":
        return IntentCatalog(
            entries=self.entries,
            permutation=None if permutation is None else tuple(permutation),
        )

    @classmethod
    def from_entries(cls, raw: Iterable[dict]) -> "IntentCatalog":
        entries = tuple(
            IntentEntry(id=int(e["id"]), name=str(e["name"]), description=str(e["description"]))
            for e in sorted(raw, key=lambda e: int(e["id"]))
        )
        return cls(entries=entries)

    @classmethod
    def from_file(cls, path: str | Path) -> "IntentCatalog":
        with open(path, encoding="utf-8") as fh:
            return cls.from_entries(json.load(fh))

    @classmethod
    def default(cls) -> "IntentCatalog":
        data = resources.files("cookalong.assets").joinpath("intents.json").read_text("utf-8")
        return cls.from_entries(json.loads(data))


class IntentParseError(ValueError):
    """The backend output could not be parsed into intent ids."""

    def __init__(self, message: str, raw: str) -> None:
        super().__init__(message)
        self.raw = raw


def build_intent_prompt(
    catalog: IntentCatalog,
    history: Sequence[Turn],
    user_utterance: str,
    max_history_chars: int | None = None,
) -> str:
    """Assemble "{descriptions} {history} [user] {utterance}". Pure."""
    if not user_utterance:
        raise ValueError("user utterance is empty")
    rendered = format_history(truncate_history(history, max_history_chars))
    tail = f"{rendered} [user] {user_utterance}" if rendered else f"[user] {user_utterance}"
    return f"{catalog.description_block()} {tail}"


@dataclass(frozen=True)
class IntentPrediction:
    intents: frozenset[int]
    raw: str


def parse_prediction(raw: str, catalog: IntentCatalog) -> IntentPrediction:
    """Map "... [intents] i j ..." back to canonical intent ids.

    Raises IntentParseError (carrying the raw output) when the marker is
    missing, a token is not an integer, or an index is out of range.
    Duplicate indices collapse silently.
    """
    idx = raw.find(PREDICTION_MARKER)
    if idx == -1:
        raise IntentParseError(f"no {PREDICTION_MARKER!r} marker in backend output", raw)
    payload = raw[idx + len(PREDICTION_MARKER) :].strip()
    if not payload:
        raise IntentParseError(f"nothing after {PREDICTION_MARKER!r} marker", raw)
    canonical: set[int] = set()
    for token in payload.split():
        if not _INT_RE.fullmatch(token):
            raise IntentParseError(f"non-integer intent index {token!r}", raw)
        try:
            canonical.add(catalog.to_canonical(int(token)))
        except ValueError as exc:
            raise IntentParseError(str(exc), raw) from exc
    return IntentPrediction(intents=frozenset(canonical), raw=raw)


def detect_intents(
    backend: CompletionBackend,
    catalog: IntentCatalog,
    history: Sequence[Turn],
    user_utterance: str,
    max_history_chars: int | None = None,
) -> IntentPrediction:
    """One detection round trip: build prompt, complete, parse."""
    prompt = build_intent_prompt(catalog, history, user_utterance, max_history_chars)
    raw = complete(backend, prompt)
    return parse_prediction(raw, catalog)


def micro_f1(
    predictions: Sequence[frozenset[int] | set[int]],
    golds: Sequence[frozenset[int] | set[int]],
) -> float:
    """Micro-averaged F1 with counts pooled over all turns.

    Returns 1.0 when both pools are empty (nothing to predict, nothing
    predicted).
    """
    if len(predictions) != len(golds):
        raise ValueError(f"{len(predictions)} predictions vs {len(golds)} golds")
    tp = fp = fn = 0
    for pred, gold in zip(predictions, golds):
        tp += len(pred & gold)
        fp += len(pred - gold)
        fn += len(gold - pred)
    if tp == 0 and fp == 0 and fn == 0:
        return 1.0
    return 2 * tp / (2 * tp + fp + fn)


@dataclass(frozen=True)
class IntentEvalReport:
    micro_f1: float
    n_evaluated: int
    n_parse_failures: int


def _annotated_user_turns(
    conversations: Sequence[Conversation],
) -> list[tuple[list[Turn], Turn]]:
    examples = []
    for conversation in conversations:
        for pos, turn in enumerate(conversation.turns):
            if turn.role == "user" and turn.gold_intents is not None:
                examples.append((list(conversation.turns[:pos]), turn))
    return examples


def evaluate_intent_detection(
    conversations: Sequence[Conversation],
    backend: CompletionBackend,
    catalog: IntentCatalog,
    k_shot: int = 0,
    max_history_chars: int | None = None,
) -> IntentEvalReport:
    """Score intent detection over every annotated user turn.

    With k_shot > 0 the first k annotated turns become in-context
    demonstrations (prompt plus " [intents] i j", joined by blank lines) and
    are excluded from scoring. A parse failure counts as an empty prediction.
    """
    examples = _annotated_user_turns(conversations)
    if k_shot < 0:
        raise ValueError("k_shot must be >= 0")
    if k_shot >= len(examples):
        raise ValueError(f"k_shot {k_shot} leaves no turns to evaluate")
    demos = []
    for history, turn in examples[:k_shot]:
        prompt = build_intent_prompt(catalog, history, turn.text, max_history_chars)
        assert turn.gold_intents is not None
        labels = " ".join(str(catalog.to_display(i)) for i in sorted(turn.gold_intents))
        demos.append(f"{prompt} {PREDICTION_MARKER} {labels}")
    prefix = "\n\n".join(demos)

    predictions: list[frozenset[int]] = []
    golds: list[frozenset[int]] = []
    failures = 0
    for history, turn in examples[k_shot:]:
        prompt = build_intent_prompt(catalog, history, turn.text, max_history_chars)
        if prefix:
            prompt = f"{prefix}\n\n{prompt}"
        raw = complete(backend, prompt)
        try:
            predictions.append(parse_prediction(raw, catalog).intents)
        except IntentParseError:
            failures += 1
            predictions.append(frozenset())
        assert turn.gold_intents is not None
        golds.append(turn.gold_intents)
    return IntentEvalReport(
        micro_f1=micro_f1(predictions, golds),
        n_evaluated=len(predictions),
        n_parse_failures=failures,
    )
