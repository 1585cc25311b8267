"""Shared fixtures: the committed corpus plus random-object builders."""

from __future__ import annotations

import random
from pathlib import Path

import pytest

from icl_dst.corpus import (
    EntityDatabase,
    gold_value_counts,
    load_dialogues,
    load_ontology,
    load_schema,
    sample_few_shot,
)
from icl_dst.normalize import build_canonical_map
from icl_dst.retrieval import ExampleIndex, load_embeddings
from icl_dst.state import (
    DONT_CARE,
    DialogueState,
    LiteralValue,
    SlotName,
    SlotRef,
    StateChange,
)

FIXTURES = Path(__file__).parent / "fixtures"

# Small universe for randomized state/delta construction.
SLOT_UNIVERSE = (
    SlotName("hotel", "area"),
    SlotName("hotel", "stars"),
    SlotName("hotel", "name"),
    SlotName("hotel", "parking"),
    SlotName("restaurant", "area"),
    SlotName("restaurant", "food"),
    SlotName("train", "day"),
    SlotName("taxi", "destination"),
    SlotName("taxi", "leaveat"),
)
VALUE_UNIVERSE = (
    "east",
    "west",
    "north",
    "4",
    "indian",
    "british",
    "friday",
    "acorn guest house",
    "09:15",
    "yes",
)


def random_state(rng: random.Random, max_size: int = 5) -> DialogueState:
    slots = rng.sample(SLOT_UNIVERSE, rng.randint(0, max_size))
    return DialogueState({s: rng.choice(VALUE_UNIVERSE) for s in slots})


def random_delta(
    rng: random.Random,
    base: DialogueState | None = None,
    allow_refs: bool = True,
    max_size: int = 4,
) -> StateChange:
    """Random state change; references target slots valued in `base`."""
    slots = rng.sample(SLOT_UNIVERSE, rng.randint(0, max_size))
    updates = {}
    removals = set()
    referable = sorted(base.entries) if base is not None else []
    for slot in slots:
        roll = rng.random()
        if roll < 0.15:
            removals.add(slot)
        elif roll < 0.25:
            updates[slot] = DONT_CARE
        elif allow_refs and referable and roll < 0.45:
            target = rng.choice(referable)
            if target != slot:
                updates[slot] = SlotRef(target)
            else:
                updates[slot] = LiteralValue(rng.choice(VALUE_UNIVERSE))
        else:
            updates[slot] = LiteralValue(rng.choice(VALUE_UNIVERSE))
    return StateChange(updates, frozenset(removals))


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def schema():
    return load_schema(FIXTURES / "schema.json")


@pytest.fixture(scope="session")
def dialogues():
    return load_dialogues(FIXTURES / "dialogues.jsonl")


@pytest.fixture(scope="session")
def ontology():
    return load_ontology(FIXTURES / "ontology.json")


@pytest.fixture(scope="session")
def database():
    return EntityDatabase.load(FIXTURES / "db")


@pytest.fixture(scope="session")
def pool(dialogues, schema):
    return sample_few_shot(dialogues, 1.0, 0, schema)


@pytest.fixture(scope="session")
def vectors():
    return load_embeddings(FIXTURES / "embeddings.jsonl")


@pytest.fixture(scope="session")
def index(pool, vectors):
    return ExampleIndex.build(pool, vectors)


@pytest.fixture(scope="session")
def cmap(schema, database, ontology, pool):
    return build_canonical_map(
        schema, database, ontology, gold_counts=gold_value_counts(pool)
    )
