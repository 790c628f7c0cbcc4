"""Shared fixtures: the worked-example recipe dialog and golden prompt files."""

import json
from pathlib import Path

import pytest

from cookalong.corpus import Recipe, Turn
from cookalong.intent import IntentCatalog

DATA_DIR = Path(__file__).parent / "data"
GOLDEN_DIR = Path(__file__).parent / "golden"


@pytest.fixture(scope="session")
def golden():
    def read(name: str) -> str:
        return (GOLDEN_DIR / name).read_text("utf-8")

    return read


@pytest.fixture(scope="session")
def worked_example() -> dict:
    return json.loads((DATA_DIR / "hash_browns.json").read_text("utf-8"))


@pytest.fixture(scope="session")
def recipe(worked_example) -> Recipe:
    raw = worked_example["recipe"]
    return Recipe.from_step_texts(raw["id"], raw["title"], raw["steps"])


@pytest.fixture(scope="session")
def turns(worked_example) -> list[Turn]:
    return [Turn(role=t["role"], text=t["text"]) for t in worked_example["turns"]]


@pytest.fixture(scope="session")
def catalog() -> IntentCatalog:
    return IntentCatalog.default()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One PASS/FAIL/SKIP line per acceptance criterion at the end of a run."""
    rows = {}
    for outcome, label in (("passed", "PASS"), ("failed", "FAIL"), ("skipped", "SKIP")):
        for report in terminalreporter.stats.get(outcome, []):
            nodeid = getattr(report, "nodeid", "")
            if "test_acceptance.py" in nodeid and report.when in ("call", "setup"):
                rows[nodeid.split("::", 1)[1]] = label
    if rows:
        terminalreporter.section("acceptance criteria")
        for name in sorted(rows):
            terminalreporter.write_line(f"{rows[name]:4s} {name}")
