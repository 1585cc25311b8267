"""Toy corpus construction and the primary-package export bridge."""

from __future__ import annotations

import json
import subprocess
import sys
from pathlib import Path

import pytest

REPO_ROOT = Path(__file__).resolve().parent.parent.parent
PRIMARY_FIXTURES = REPO_ROOT / "tests" / "fixtures"

# Four slot groups, five values each, three phrasings per value: sixty
# single-turn dialogues whose wording correlates with the touched slot.
GROUPS = {
    "hotel-area": (
        ["centre", "east", "north", "south", "west"],
        [
            "i need a hotel in the {v} part of town",
            "find me a place to stay in the {v}",
            "looking for accommodation around the {v} area",
        ],
    ),
    "restaurant-food": (
        ["british", "indian", "italian", "chinese", "thai"],
        [
            "book a restaurant serving {v} food",
            "i fancy some {v} cuisine tonight",
            "any good {v} places to eat",
        ],
    ),
    "train-day": (
        ["monday", "tuesday", "wednesday", "thursday", "friday"],
        [
            "i need a train on {v}",
            "get me rail tickets for {v}",
            "travelling by train this {v}",
        ],
    ),
    "hotel-stars": (
        ["1", "2", "3", "4", "5"],
        [
            "the hotel should have {v} stars",
            "i want a {v} star rating",
            "please only {v} star hotels",
        ],
    ),
}


def toy_dialogue_records() -> list[dict]:
    records = []
    counter = 0
    for slot_key, (values, templates) in GROUPS.items():
        domain = slot_key.split("-")[0]
        for value in values:
            for template in templates:
                records.append(
                    {
                        "id": f"toy{counter:03d}",
                        "domains": [domain],
                        "turns": [
                            {
                                "agent": "",
                                "user": template.format(v=value),
                                "gold_state": {slot_key: value},
                            }
                        ],
                    }
                )
                counter += 1
    return records


@pytest.fixture(scope="session")
def toy_corpus(tmp_path_factory):
    """Toy dialogues plus pairs/texts exported through the primary CLI."""
    root = tmp_path_factory.mktemp("toy-corpus")
    dialogues_path = root / "dialogues.jsonl"
    with open(dialogues_path, "w", encoding="utf-8") as fh:
        for record in toy_dialogue_records():
            fh.write(json.dumps(record) + "\n")
    pairs_path = root / "pairs.jsonl"
    texts_path = root / "texts.jsonl"
    subprocess.run(
        [
            sys.executable, "-m", "icl_dst.cli", "export-pairs",
            "--schema", str(PRIMARY_FIXTURES / "schema.json"),
            "--dialogues", str(dialogues_path),
            "--out-pairs", str(pairs_path),
            "--out-texts", str(texts_path),
        ],
        check=True,
        capture_output=True,
    )
    return {
        "root": root,
        "dialogues": dialogues_path,
        "pairs": pairs_path,
        "texts": texts_path,
        "schema": PRIMARY_FIXTURES / "schema.json",
    }
