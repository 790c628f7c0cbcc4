"""Instruction state tracking: align system utterances to recipe steps.

The instruction state is the index of the last recipe step the assistant has
instructed; 0 means nothing has been instructed yet. A new system utterance is
scored against every micro-step (sentence) of every recipe step, and the state
moves to the best-scoring step when either threshold branch fires:

    (best == current + 1 and max_score > alpha1) or (max_score > alpha2)

otherwise the state stays put. Strict comparisons throughout; argmax ties go
to the lowest step index.
"""

from __future__ import annotations

import math
import os
from collections import Counter
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import httpx

from .corpus import Conversation, Recipe, token_bag

SENTINEL_STATE = 0


class ScorerUnavailableError(RuntimeError):
    """The similarity backend (e.g. embedding endpoint) could not be reached."""


def unigram_f1(a: str, b: str) -> float:
    """Bag-of-tokens F1 overlap between two texts, in [0, 1]."""
    return _bag_f1(token_bag(a), token_bag(b))


def _bag_f1(bag_a: Counter, bag_b: Counter) -> float:
    len_a = sum(bag_a.values())
    len_b = sum(bag_b.values())
    if len_a == 0 or len_b == 0:
        return 0.0
    overlap = sum((bag_a & bag_b).values())
    if overlap == 0:
        return 0.0
    precision = overlap / len_a
    recall = overlap / len_b
    return 2 * precision * recall / (precision + recall)


class SimilarityScorer(Protocol):
    """Scores one query text against a batch of candidate texts."""

    name: str

    def scores(self, query: str, candidates: Sequence[str]) -> list[float]: ...


class WordMatchScorer:
    """Unigram-F1 scorer with a token-bag cache keyed by text."""

    name = "wordmatch"

    def __init__(self) -> None:
        self._bags: dict[str, Counter] = {}

    def _bag(self, text: str) -> Counter:
        bag = self._bags.get(text)
        if bag is None:
            bag = token_bag(text)
            self._bags[text] = bag
        return bag

    def scores(self, query: str, candidates: Sequence[str]) -> list[float]:
        query_bag = self._bag(query)
        return [_bag_f1(query_bag, self._bag(c)) for c in candidates]


class EmbeddingScorer:
    """Cosine similarity against a remote sentence-embedding endpoint.

    The endpoint takes POST {"texts": [...]} and returns {"vectors": [[...]]}
    in input order. Vectors are re-normalized defensively; negative cosines
    clamp to 0 so thresholds share their meaning with the word-match scorer.
    """

    name = "embedding"

    def __init__(
        self,
        endpoint: str,
        auth_env: str | None = None,
        timeout: float = 15.0,
        batch_size: int = 64,
        client: httpx.Client | None = None,
    ) -> None:
        self.endpoint = endpoint
        self.auth_env = auth_env
        self.timeout = timeout
        self.batch_size = batch_size
        self._client = client or httpx.Client(timeout=timeout)
        self._cache: dict[str, list[float]] = {}

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(self.auth_env, "") if self.auth_env else ""
        if token:
            headers["Authorization"] = f"Bearer {token}"
        return headers

    def _fetch(self, texts: list[str]) -> None:
        for i in range(0, len(texts), self.batch_size):
            batch = texts[i : i + self.batch_size]
            try:
                resp = self._client.post(
                    self.endpoint, json={"texts": batch}, headers=self._headers()
                )
                resp.raise_for_status()
                vectors = resp.json()["vectors"]
            except (httpx.HTTPError, KeyError, ValueError) as exc:
                raise ScorerUnavailableError(f"embedding endpoint failed: {exc}") from exc
            if len(vectors) != len(batch):
                raise ScorerUnavailableError(
                    f"embedding endpoint returned {len(vectors)} vectors for {len(batch)} texts"
                )
            for text, vec in zip(batch, vectors):
                self._cache[text] = _normalize(vec)

    def _vectors(self, texts: Sequence[str]) -> list[list[float]]:
        missing = [t for t in dict.fromkeys(texts) if t not in self._cache]
        if missing:
            self._fetch(missing)
        return [self._cache[t] for t in texts]

    def scores(self, query: str, candidates: Sequence[str]) -> list[float]:
        vecs = self._vectors([query, *candidates])
        query_vec = vecs[0]
        return [_clamped_cosine(query_vec, v) for v in vecs[1:]]


def _normalize(vec: Sequence[float]) -> list[float]:
    norm = math.sqrt(sum(x * x for x in vec))
    if norm == 0:
        return [0.0] * len(vec)
    return [x / norm for x in vec]


def _clamped_cosine(a: Sequence[float], b: Sequence[float]) -> float:
    cos = sum(x * y for x, y in zip(a, b))
    return min(max(cos, 0.0), 1.0)


@dataclass(frozen=True)
class TrackerConfig:
    scorer: SimilarityScorer = field(default_factory=WordMatchScorer)
    alpha1: float = 0.2
    alpha2: float = 0.3

    def __post_init__(self) -> None:
        if not 0 < self.alpha1 <= self.alpha2 < 1:
            raise ValueError(
                f"thresholds must satisfy 0 < alpha1 <= alpha2 < 1, "
                f"got alpha1={self.alpha1}, alpha2={self.alpha2}"
            )


# Validation-tuned thresholds per scorer.
WORDMATCH_THRESHOLDS = (0.2, 0.3)
EMBEDDING_THRESHOLDS = (0.5, 0.6)


@dataclass(frozen=True)
class AlignmentScore:
    step_index: int  # 1-based
    score: float
    best_micro_step: str


def score_steps(
    utterance: str, recipe: Recipe, scorer: SimilarityScorer
) -> list[AlignmentScore]:
    """Best micro-step similarity for every recipe step, in step order."""
    if not utterance.strip():
        return [
            AlignmentScore(step_index=s.index, score=0.0, best_micro_step=s.micro_steps[0])
            for s in recipe.steps
        ]
    flat = [m for step in recipe.steps for m in step.micro_steps]
    scores = scorer.scores(utterance, flat)
    result = []
    pos = 0
    for step in recipe.steps:
        chunk = scores[pos : pos + len(step.micro_steps)]
        pos += len(step.micro_steps)
        best = max(range(len(chunk)), key=lambda i: (chunk[i], -i))
        result.append(
            AlignmentScore(
                step_index=step.index,
                score=chunk[best],
                best_micro_step=step.micro_steps[best],
            )
        )
    return result


def advance_state(
    prev: int, utterance: str, recipe: Recipe, config: TrackerConfig
) -> int:
    """One tracking update: returns the new instruction state."""
    if not 0 <= prev <= recipe.n_steps:
        raise ValueError(f"state {prev} outside 0..{recipe.n_steps}")
    if not utterance.strip():
        return prev
    scores = score_steps(utterance, recipe, config.scorer)
    best = min(scores, key=lambda s: (-s.score, s.step_index))
    if (best.step_index == prev + 1 and best.score > config.alpha1) or (
        best.score > config.alpha2
    ):
        return best.step_index
    return prev


def track_conversation(
    conversation: Conversation, recipe: Recipe, config: TrackerConfig
) -> list[tuple[int, int]]:
    """Fold the tracker over a conversation's system turns.

    Returns (turn position, state after that turn) for every system turn,
    starting from the sentinel state 0. User turns never change the state.
    """
    state = SENTINEL_STATE
    trace = []
    for pos, turn in conversation.system_turns():
        state = advance_state(state, turn.text, recipe, config)
        trace.append((pos, state))
    return trace


def evaluate_tracking(predictions: Sequence[int], gold: Sequence[int | None]) -> float:
    """Exact-match accuracy over annotated turns (None gold entries excluded)."""
    if len(predictions) != len(gold):
        raise ValueError(f"length mismatch: {len(predictions)} predictions, {len(gold)} gold")
    pairs = [(p, g) for p, g in zip(predictions, gold) if g is not None]
    if not pairs:
        raise ValueError("no annotated turns to evaluate")
    return sum(p == g for p, g in pairs) / len(pairs)


def track_and_evaluate(
    conversations: Sequence[Conversation],
    recipes: Sequence[Recipe],
    config: TrackerConfig,
) -> tuple[float, int]:
    """Corpus-level tracking accuracy over gold-annotated system turns.

    Returns (accuracy, number of annotated turns).
    """
    by_id = {r.id: r for r in recipes}
    predictions: list[int] = []
    gold: list[int | None] = []
    for conv in conversations:
        recipe = by_id[conv.recipe_id]
        trace = dict(track_conversation(conv, recipe, config))
        for pos, turn in conv.system_turns():
            if turn.gold_state is not None:
                predictions.append(trace[pos])
                gold.append(turn.gold_state)
    accuracy = evaluate_tracking(predictions, gold)
    return accuracy, len(predictions)
