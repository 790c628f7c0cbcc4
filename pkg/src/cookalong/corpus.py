"""Recipe / conversation corpus: loading, validation, tokenization, statistics.

Everything in this module is immutable after load and every operation is a
pure function, so values can be shared freely across threads.
"""

from __future__ import annotations

import json
import re
import string
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable, Iterator, Literal, Sequence

Role = Literal["user", "system"]

ROLES: tuple[Role, ...] = ("user", "system")


class CorpusError(ValueError):
    """Malformed corpus file or violated corpus invariant."""


# ---------------------------------------------------------------------------
# Tokenization
# ---------------------------------------------------------------------------

_EDGE_PUNCT = string.punctuation


def tokenize_words(text: str) -> list[str]:
    """Lowercase word tokens: whitespace split, edge punctuation stripped.

    Numerals and decimal points survive intact ("0.5" stays one token), so
    ingredient quantities remain comparable across texts.
    """
    tokens = []
    for raw in text.lower().split():
        tok = raw.strip(_EDGE_PUNCT)
        if tok:
            tokens.append(tok)
    return tokens


def token_bag(text: str) -> Counter:
    """Multiset of word tokens, the unit of overlap scoring."""
    return Counter(tokenize_words(text))


# Sentence boundaries: terminator run (plus closing quotes/brackets) followed
# by whitespace and an uppercase letter, or end of text.
_BOUNDARY_RE = re.compile(r"([.!?]+[\"')\]]*)\s+(?=[A-Z])")
_TRAILING_WORD_RE = re.compile(r"([A-Za-z][\w.]*)$")

# Abbreviations never treated as sentence ends.
_PROTECTED_ABBREVS = frozenset({"e.g", "i.e", "etc", "vs", "approx", "mr", "mrs", "dr"})
# Measurement units: protected only right after a number ("0.5 ml. of water").
_UNIT_ABBREVS = frozenset(
    {"tbsp", "tsp", "oz", "ml", "g", "kg", "lb", "lbs", "qt", "pt", "c", "cm", "in", "min", "hr", "hrs", "sec"}
)


def _protected(before_terminator: str) -> bool:
    m = _TRAILING_WORD_RE.search(before_terminator)
    if m is None:
        return False
    word = m.group(1).lower().rstrip(".")
    if word in _PROTECTED_ABBREVS:
        return True
    if word in _UNIT_ABBREVS:
        prefix_tokens = before_terminator[: m.start(1)].split()
        return bool(prefix_tokens) and any(ch.isdigit() for ch in prefix_tokens[-1])
    return False


def split_sentences(text: str) -> list[str]:
    """Split text into sentences without altering their content.

    The concatenation of the result equals the input modulo whitespace.
    """
    sentences: list[str] = []
    start = 0
    for m in _BOUNDARY_RE.finditer(text):
        if _protected(text[: m.start(1)]):
            continue
        sentences.append(text[start : m.end(1)])
        start = m.end()
    tail = text[start:]
    if tail.strip():
        sentences.append(tail)
    return [s.strip() for s in sentences if s.strip()]


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RecipeStep:
    index: int  # 1-based
    text: str
    micro_steps: tuple[str, ...]


@dataclass(frozen=True)
class Recipe:
    id: str
    title: str
    steps: tuple[RecipeStep, ...]

    @property
    def n_steps(self) -> int:
        return len(self.steps)

    @classmethod
    def from_step_texts(cls, id: str, title: str, steps: Sequence[str]) -> "Recipe":
        if not steps:
            raise CorpusError(f"recipe {id!r} has no steps")
        built = []
        for i, text in enumerate(steps, start=1):
            micro = tuple(split_sentences(text))
            if not micro:
                raise CorpusError(f"recipe {id!r} step {i} is empty")
            built.append(RecipeStep(index=i, text=text, micro_steps=micro))
        return cls(id=id, title=title, steps=tuple(built))


@dataclass(frozen=True)
class Turn:
    role: Role
    text: str
    gold_intents: frozenset[int] | None = None
    gold_state: int | None = None

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise CorpusError(f"unknown role {self.role!r}")
        if not self.text:
            raise CorpusError("turn text is empty")
        if self.gold_intents is not None and self.role != "user":
            raise CorpusError("gold_intents only allowed on user turns")
        if self.gold_state is not None and self.role != "system":
            raise CorpusError("gold_state only allowed on system turns")


@dataclass(frozen=True)
class Conversation:
    id: str
    recipe_id: str
    turns: tuple[Turn, ...]

    def system_turns(self) -> Iterator[tuple[int, Turn]]:
        """(position in turns, turn) for every system turn, in order."""
        for i, turn in enumerate(self.turns):
            if turn.role == "system":
                yield i, turn


def validate_grounding(conversation: Conversation, recipe: Recipe) -> None:
    """Check gold states fit the grounding recipe's step range."""
    for i, turn in conversation.system_turns():
        if turn.gold_state is not None and not 1 <= turn.gold_state <= recipe.n_steps:
            raise CorpusError(
                f"conversation {conversation.id!r} turn {i}: gold_state "
                f"{turn.gold_state} outside 1..{recipe.n_steps}"
            )


# ---------------------------------------------------------------------------
# JSONL load / dump
# ---------------------------------------------------------------------------


def _jsonl_objects(path: Path) -> Iterator[tuple[int, dict]]:
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            if not isinstance(obj, dict):
                raise CorpusError(f"{path}:{lineno}: expected a JSON object")
            yield lineno, obj


def _parse_recipe(obj: dict, where: str) -> Recipe:
    try:
        steps = obj["steps"]
        if not isinstance(steps, list) or not all(isinstance(s, str) for s in steps):
            raise CorpusError(f"{where}: 'steps' must be a list of strings")
        return Recipe.from_step_texts(str(obj["id"]), str(obj.get("title", "")), steps)
    except KeyError as exc:
        raise CorpusError(f"{where}: missing field {exc}") from exc


def _parse_turn(obj: dict, where: str) -> Turn:
    try:
        gold_intents = obj.get("gold_intents")
        if gold_intents is not None:
            if not all(isinstance(i, int) for i in gold_intents):
                raise CorpusError(f"{where}: gold_intents must be integers")
            gold_intents = frozenset(gold_intents)
        gold_state = obj.get("gold_state")
        if gold_state is not None and not isinstance(gold_state, int):
            raise CorpusError(f"{where}: gold_state must be an integer")
        return Turn(
            role=obj["role"],
            text=obj["text"],
            gold_intents=gold_intents,
            gold_state=gold_state,
        )
    except KeyError as exc:
        raise CorpusError(f"{where}: missing field {exc}") from exc
    except CorpusError as exc:
        if str(exc).startswith(where):
            raise
        raise CorpusError(f"{where}: {exc}") from exc


def _parse_conversation(obj: dict, where: str) -> Conversation:
    try:
        turns = obj["turns"]
        if not isinstance(turns, list) or not turns:
            raise CorpusError(f"{where}: 'turns' must be a non-empty list")
        parsed = tuple(_parse_turn(t, f"{where} turn {i}") for i, t in enumerate(turns))
        return Conversation(id=str(obj["id"]), recipe_id=str(obj["recipe_id"]), turns=parsed)
    except KeyError as exc:
        raise CorpusError(f"{where}: missing field {exc}") from exc


def load_recipes(path: str | Path) -> list[Recipe]:
    path = Path(path)
    recipes = []
    seen: set[str] = set()
    for lineno, obj in _jsonl_objects(path):
        recipe = _parse_recipe(obj, f"{path}:{lineno}")
        if recipe.id in seen:
            raise CorpusError(f"{path}:{lineno}: duplicate recipe id {recipe.id!r}")
        seen.add(recipe.id)
        recipes.append(recipe)
    return recipes


def load_conversations(path: str | Path) -> list[Conversation]:
    path = Path(path)
    return [_parse_conversation(obj, f"{path}:{lineno}") for lineno, obj in _jsonl_objects(path)]


def load_corpus(
    recipes_path: str | Path, conversations_path: str | Path
) -> tuple[list[Recipe], list[Conversation]]:
    """Load and cross-validate a recipe + conversation corpus.

    Every conversation must resolve to a loaded recipe and every gold state
    must fall inside that recipe's step range.
    """
    recipes = load_recipes(recipes_path)
    conversations = load_conversations(conversations_path)
    by_id = {r.id: r for r in recipes}
    for conv in conversations:
        recipe = by_id.get(conv.recipe_id)
        if recipe is None:
            raise CorpusError(
                f"conversation {conv.id!r} references unknown recipe {conv.recipe_id!r}"
            )
        validate_grounding(conv, recipe)
    return recipes, conversations


def recipe_to_dict(recipe: Recipe) -> dict:
    return {"id": recipe.id, "title": recipe.title, "steps": [s.text for s in recipe.steps]}


def turn_to_dict(turn: Turn) -> dict:
    obj: dict = {"role": turn.role, "text": turn.text}
    if turn.gold_intents is not None:
        obj["gold_intents"] = sorted(turn.gold_intents)
    if turn.gold_state is not None:
        obj["gold_state"] = turn.gold_state
    return obj


def conversation_to_dict(conversation: Conversation) -> dict:
    return {
        "id": conversation.id,
        "recipe_id": conversation.recipe_id,
        "turns": [turn_to_dict(t) for t in conversation.turns],
    }


def _dump_jsonl(objs: Iterable[dict], out: IO[str]) -> None:
    for obj in objs:
        out.write(json.dumps(obj, ensure_ascii=False) + "\n")


def dump_recipes(recipes: Iterable[Recipe], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        _dump_jsonl((recipe_to_dict(r) for r in recipes), fh)


def dump_conversations(conversations: Iterable[Conversation], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        _dump_jsonl((conversation_to_dict(c) for c in conversations), fh)


# ---------------------------------------------------------------------------
# Statistics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CorpusStats:
    n_dialogues: int
    utterances_per_dialogue: float
    steps_per_recipe: float
    tokens_per_recipe: float
    sentences_per_step: float
    tokens_per_step: float


def compute_stats(
    recipes: Sequence[Recipe], conversations: Sequence[Conversation]
) -> CorpusStats:
    """Corpus means. tokens_per_recipe averages per recipe; sentences_per_step
    and tokens_per_step are pooled over all steps."""
    if not recipes or not conversations:
        raise CorpusError("cannot compute statistics over an empty corpus")
    step_tokens = [len(tokenize_words(s.text)) for r in recipes for s in r.steps]
    step_sentences = [len(s.micro_steps) for r in recipes for s in r.steps]
    n_steps = len(step_tokens)
    return CorpusStats(
        n_dialogues=len(conversations),
        utterances_per_dialogue=sum(len(c.turns) for c in conversations) / len(conversations),
        steps_per_recipe=n_steps / len(recipes),
        tokens_per_recipe=sum(step_tokens) / len(recipes),
        sentences_per_step=sum(step_sentences) / n_steps,
        tokens_per_step=sum(step_tokens) / n_steps,
    )


@dataclass(frozen=True)
class StateChangeHistogram:
    bins: dict[int, int]

    @property
    def total(self) -> int:
        return sum(self.bins.values())

    def modal_delta(self) -> int | None:
        if not self.bins:
            return None
        return max(self.bins, key=lambda d: (self.bins[d], -abs(d)))


def state_change_histogram(conversations: Sequence[Conversation]) -> StateChangeHistogram:
    """Histogram of gold-state deltas between consecutive system turns.

    Pairs where either side lacks a gold state are skipped.
    """
    bins: Counter = Counter()
    for conv in conversations:
        states = [turn.gold_state for _, turn in conv.system_turns()]
        for prev, cur in zip(states, states[1:]):
            if prev is not None and cur is not None:
                bins[cur - prev] += 1
    return StateChangeHistogram(bins=dict(bins))
