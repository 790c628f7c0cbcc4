"""Ingestion of third-party cooking-dialog releases into the native JSONL schema.

Published dialog datasets disagree on field names and nesting, so this module
maps a small family of common layouts (JSON arrays, {"data"/"dialogs": [...]}
wrappers, JSONL, one-dialog-per-file directories) onto Recipe/Conversation.
Field aliases are resolved in a fixed priority order; anything that cannot be
mapped raises AdapterError naming the file and record rather than guessing.
"""

from __future__ import annotations

import json
import logging
import re
from pathlib import Path
from typing import Iterable, Iterator, Mapping

from .corpus import Conversation, CorpusError, Recipe, Turn
from .intent import IntentCatalog

logger = logging.getLogger(__name__)


class AdapterError(ValueError):
    """A release file or record could not be mapped onto the native schema."""


_DIALOG_ID_KEYS = ("id", "dialog_id", "dialogue_id", "conversation_id", "file_name")
_RECIPE_ID_KEYS = ("recipe_id", "article_id", "doc_id", "recipe_name")
_TURN_LIST_KEYS = ("turns", "messages", "utterances", "dialog", "dialogue", "content")
_ROLE_KEYS = ("role", "speaker", "sender", "from", "bot")
_TEXT_KEYS = ("text", "utterance", "message", "value")
_INTENT_KEYS = ("gold_intents", "intents", "intent", "user_intent")
_STATE_KEYS = ("gold_state", "state", "tracker_completed_step", "completed_step", "current_step")
_RECIPE_TITLE_KEYS = ("title", "name", "recipe_name")
_RECIPE_STEP_KEYS = ("steps", "instructions", "content", "text")

_USER_ROLES = {"user", "usr", "human", "u", "false"}
_SYSTEM_ROLES = {"system", "agent", "assistant", "sys", "bot", "wizard", "s", "true"}

_STEP_NUM_RE = re.compile(r"(\d+)")


def _first_key(record: Mapping, keys: Iterable[str]):
    for key in keys:
        if key in record and record[key] is not None:
            return record[key]
    return None


def _parse_role(value) -> str:
    text = str(value).strip().lower()
    if text in _USER_ROLES:
        return "user"
    if text in _SYSTEM_ROLES:
        return "system"
    raise AdapterError(f"unrecognized speaker role {value!r}")


def _parse_state(value) -> int | None:
    if value is None:
        return None
    if isinstance(value, bool):
        raise AdapterError(f"cannot read a step number from {value!r}")
    if isinstance(value, int):
        return value
    match = _STEP_NUM_RE.search(str(value))
    if match is None:
        raise AdapterError(f"cannot read a step number from {value!r}")
    return int(match.group(1))


def _parse_intents(value, catalog: IntentCatalog) -> frozenset[int] | None:
    if value is None:
        return None
    if isinstance(value, (int, str)):
        value = [value]
    ids = set()
    try:
        for item in value:
            if isinstance(item, bool):
                raise AdapterError(f"unrecognized intent label {item!r}")
            if isinstance(item, int):
                ids.add(catalog.entry(item).id)
            elif isinstance(item, str):
                item = item.strip()
                if item.isdigit():
                    ids.add(catalog.entry(int(item)).id)
                else:
                    # Label strings sometimes pack several names: "req_amount;confirm".
                    for name in re.split(r"[;,]", item):
                        name = name.strip()
                        if name:
                            ids.add(catalog.by_name(name).id)
            else:
                raise AdapterError(f"unrecognized intent label {item!r}")
    except AdapterError:
        raise
    except ValueError as exc:
        raise AdapterError(str(exc)) from exc
    return frozenset(ids) if ids else None


def _parse_recipe(raw: Mapping, fallback_id: str) -> Recipe:
    recipe_id = str(_first_key(raw, ("id",) + _RECIPE_ID_KEYS) or fallback_id)
    title = str(_first_key(raw, _RECIPE_TITLE_KEYS) or recipe_id)
    steps_raw = _first_key(raw, _RECIPE_STEP_KEYS)
    if steps_raw is None:
        raise AdapterError(f"recipe {recipe_id!r} has no steps field")
    steps: list[str] = []
    for item in steps_raw if isinstance(steps_raw, list) else [steps_raw]:
        if isinstance(item, str):
            steps.append(item)
        elif isinstance(item, Mapping):
            text = _first_key(item, _TEXT_KEYS + ("instruction",))
            if text is None:
                raise AdapterError(f"recipe {recipe_id!r} has a step without text")
            steps.append(str(text))
        else:
            raise AdapterError(f"recipe {recipe_id!r} has an unreadable step {item!r}")
    try:
        return Recipe.from_step_texts(recipe_id, title, steps)
    except CorpusError as exc:
        raise AdapterError(f"recipe {recipe_id!r}: {exc}") from exc


def _parse_turn(raw: Mapping, catalog: IntentCatalog) -> Turn:
    role_raw = _first_key(raw, _ROLE_KEYS)
    text_raw = _first_key(raw, _TEXT_KEYS)
    if role_raw is None or text_raw is None:
        raise AdapterError(f"turn record missing role or text: keys {sorted(raw)}")
    role = _parse_role(role_raw)
    annotations = raw.get("annotations") if isinstance(raw.get("annotations"), Mapping) else raw
    intents = state = None
    if role == "user":
        intents = _parse_intents(_first_key(annotations, _INTENT_KEYS), catalog)
    else:
        state = _parse_state(_first_key(annotations, _STATE_KEYS))
    try:
        return Turn(role=role, text=str(text_raw), gold_intents=intents, gold_state=state)
    except CorpusError as exc:
        raise AdapterError(str(exc)) from exc


def _parse_dialog(raw: Mapping, fallback_id: str, catalog: IntentCatalog) -> tuple[Conversation, Recipe | None]:
    dialog_id = str(_first_key(raw, _DIALOG_ID_KEYS) or fallback_id)
    turns_raw = _first_key(raw, _TURN_LIST_KEYS)
    if not isinstance(turns_raw, list) or not turns_raw:
        raise AdapterError(f"dialog {dialog_id!r} has no turn list")
    turns = []
    for i, turn_raw in enumerate(turns_raw):
        if isinstance(turn_raw, str):
            # Bare strings alternate user/system starting from the user.
            turns.append(Turn(role="user" if i % 2 == 0 else "system", text=turn_raw))
            continue
        try:
            turns.append(_parse_turn(turn_raw, catalog))
        except AdapterError as exc:
            raise AdapterError(f"dialog {dialog_id!r} turn {i}: {exc}") from exc
    recipe = None
    recipe_raw = raw.get("recipe") or raw.get("article") or raw.get("knowledge")
    if isinstance(recipe_raw, Mapping):
        recipe = _parse_recipe(recipe_raw, fallback_id=f"{dialog_id}-recipe")
    recipe_id = _first_key(raw, _RECIPE_ID_KEYS)
    if recipe_id is None:
        if recipe is None:
            raise AdapterError(f"dialog {dialog_id!r} has neither a recipe_id nor an inline recipe")
        recipe_id = recipe.id
    try:
        conversation = Conversation(id=dialog_id, recipe_id=str(recipe_id), turns=tuple(turns))
    except CorpusError as exc:
        raise AdapterError(f"dialog {dialog_id!r}: {exc}") from exc
    return conversation, recipe


def _iter_records(path: Path) -> Iterator[tuple[str, Mapping]]:
    """Yield (fallback id, record) for every record in a JSON or JSONL file."""
    text = path.read_text("utf-8").strip()
    if not text:
        return
    if text.startswith(("[", "{")):
        try:
            payload = json.loads(text)
        except ValueError:
            payload = None
        if isinstance(payload, list):
            for i, record in enumerate(payload):
                yield f"{path.stem}-{i}", record
            return
        if isinstance(payload, dict):
            for key in ("data", "dialogs", "dialogues", "conversations"):
                if isinstance(payload.get(key), list):
                    for i, record in enumerate(payload[key]):
                        yield f"{path.stem}-{i}", record
                    return
            yield path.stem, payload
            return
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            record = json.loads(line)
        except ValueError as exc:
            raise AdapterError(f"{path}:{lineno}: not JSON ({exc})") from exc
        yield f"{path.stem}-{lineno}", record


def _looks_like_recipe(record: Mapping) -> bool:
    has_steps = any(k in record for k in ("steps", "instructions"))
    has_turns = any(k in record for k in _TURN_LIST_KEYS if k != "content")
    return has_steps and not has_turns


def ingest_release(
    path: str | Path, catalog: IntentCatalog | None = None
) -> tuple[list[Recipe], list[Conversation]]:
    """Read a release file or directory and return normalized corpora.

    Recipes referenced by several dialogs are deduplicated by id; two
    different recipes claiming the same id is an error.
    """
    catalog = catalog or IntentCatalog.default()
    root = Path(path)
    if root.is_dir():
        files = sorted(
            p for p in root.rglob("*") if p.is_file() and p.suffix in (".json", ".jsonl")
        )
        if not files:
            raise AdapterError(f"no .json/.jsonl files under {root}")
    elif root.is_file():
        files = [root]
    else:
        raise AdapterError(f"{root} does not exist")

    recipes: dict[str, Recipe] = {}
    conversations: list[Conversation] = []
    seen_dialogs: set[str] = set()
    for file in files:
        for fallback_id, record in _iter_records(file):
            if not isinstance(record, Mapping):
                raise AdapterError(f"{file}: record {fallback_id!r} is not an object")
            try:
                if _looks_like_recipe(record):
                    recipe = _parse_recipe(record, fallback_id=fallback_id)
                    conversation = None
                else:
                    conversation, recipe = _parse_dialog(record, fallback_id, catalog)
            except AdapterError as exc:
                raise AdapterError(f"{file}: {exc}") from exc
            if recipe is not None:
                known = recipes.get(recipe.id)
                if known is not None and known != recipe:
                    raise AdapterError(f"{file}: recipe id {recipe.id!r} maps to two different recipes")
                recipes[recipe.id] = recipe
            if conversation is not None:
                if conversation.id in seen_dialogs:
                    raise AdapterError(f"{file}: duplicate dialog id {conversation.id!r}")
                seen_dialogs.add(conversation.id)
                conversations.append(conversation)
    logger.info("ingested %d recipes, %d conversations", len(recipes), len(conversations))
    return list(recipes.values()), conversations
