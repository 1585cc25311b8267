#!/usr/bin/env python3
"""Regenerate the test fixture corpus (deterministic).

Writes under tests/fixtures/: schema.json, ontology.json, db/, dialogues.jsonl,
embeddings.jsonl, golden_prompt.txt, golden_inverted.txt, plus the
deliberately ambiguous normalizer fixtures. Everything this script produces
is committed; rerunning it must be a no-op.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))

from icl_dst.corpus import derive_turn_examples, load_dialogues, load_schema, sample_few_shot
from icl_dst.embedder import HashingEmbedder
from icl_dst.prompts import build_prompt, build_inverted_prompt
from icl_dst.retrieval import encode_context_text, write_embeddings
from icl_dst.state import TurnContext

FIXTURES = ROOT / "tests" / "fixtures"

AREAS = ["centre", "east", "north", "south", "west"]
DAYS = ["monday", "tuesday", "wednesday", "thursday", "friday", "saturday", "sunday"]
COUNTS = [str(i) for i in range(1, 9)]
YESNO = ["yes", "no"]


def cat(name, values, kind="text"):
    return {"name": name, "categorical": True, "values": values, "kind": kind}


def free(name, kind="text"):
    return {"name": name, "categorical": False, "kind": kind}


SCHEMA = {
    "domains": [
        {
            "name": "attraction",
            "slots": [
                cat("area", AREAS),
                free("name"),
                cat("type", ["museum", "college", "park", "church", "theatre", "cinema", "gallery"]),
            ],
        },
        {
            "name": "hotel",
            "slots": [
                cat("area", AREAS),
                cat("book day", DAYS),
                cat("book people", COUNTS, "integer"),
                cat("book stay", COUNTS, "integer"),
                cat("internet", YESNO, "boolean"),
                free("name"),
                cat("parking", YESNO, "boolean"),
                cat("pricerange", ["cheap", "moderate", "expensive"]),
                cat("stars", [str(i) for i in range(6)]),
                cat("type", ["hotel", "guest house"]),
            ],
        },
        {
            "name": "restaurant",
            "slots": [
                cat("area", AREAS),
                cat("book day", DAYS),
                cat("book people", COUNTS, "integer"),
                free("book time", "time"),
                free("food"),
                free("name"),
                cat("pricerange", ["cheap", "moderate", "expensive"]),
            ],
        },
        {
            "name": "taxi",
            "slots": [
                free("arriveby", "time"),
                free("departure", "location"),
                free("destination", "location"),
                free("leaveat", "time"),
            ],
        },
        {
            "name": "train",
            "slots": [
                free("arriveby", "time"),
                cat("book people", COUNTS, "integer"),
                cat("day", DAYS),
                free("departure", "location"),
                free("destination", "location"),
                free("leaveat", "time"),
            ],
        },
    ]
}

DB = {
    "hotel": [
        {"name": "acorn guest house", "address": "154 chesterton road", "area": "north",
         "stars": "4", "parking": "yes", "internet": "yes", "pricerange": "moderate",
         "type": "guest house"},
        {"name": "alexander bed and breakfast", "address": "56 saint barnabas road",
         "area": "centre", "stars": "4", "parking": "yes", "internet": "yes",
         "pricerange": "cheap", "type": "guest house"},
        {"name": "gonville hotel", "address": "gonville place", "area": "centre",
         "stars": "3", "parking": "yes", "internet": "yes", "pricerange": "expensive",
         "type": "hotel"},
        {"name": "huntingdon marriott hotel", "address": "kingfisher way", "area": "west",
         "stars": "4", "parking": "yes", "internet": "yes", "pricerange": "expensive",
         "type": "hotel"},
    ],
    "restaurant": [
        {"name": "midsummer house restaurant", "address": "midsummer common",
         "area": "centre", "food": "british", "pricerange": "expensive"},
        {"name": "pizza hut city centre", "address": "regent street city centre",
         "area": "centre", "food": "italian", "pricerange": "cheap"},
        {"name": "the golden curry", "address": "mill road city centre", "area": "centre",
         "food": "indian", "pricerange": "expensive"},
        {"name": "cocum", "address": "71 castle street city centre", "area": "west",
         "food": "indian", "pricerange": "expensive"},
    ],
    "attraction": [
        {"name": "cambridge university botanic gardens", "address": "bateman street",
         "area": "centre", "type": "park"},
        {"name": "castle galleries", "address": "unit su43, grande arcade, saint andrews street",
         "area": "centre", "type": "museum"},
        {"name": "clare college", "address": "trinity lane", "area": "west", "type": "college"},
    ],
    "train": [
        {"departure": "cambridge", "destination": "london kings cross", "day": "friday",
         "leaveat": "05:00", "arriveby": "05:51", "name": "tr0001"},
        {"departure": "cambridge", "destination": "ely", "day": "friday",
         "leaveat": "05:50", "arriveby": "06:07", "name": "tr0002"},
        {"departure": "norwich", "destination": "cambridge", "day": "saturday",
         "leaveat": "05:16", "arriveby": "06:35", "name": "tr0003"},
        {"departure": "stansted airport", "destination": "cambridge", "day": "friday",
         "leaveat": "05:24", "arriveby": "05:52", "name": "tr0004"},
    ],
    "taxi": [],
}

ONTOLOGY = {
    "attraction-area": AREAS,
    "attraction-name": ["cambridge university botanic gardens", "castle galleries", "clare college"],
    "attraction-type": ["museum", "college", "park", "church", "theatre", "cinema", "gallery"],
    "hotel-area": AREAS,
    "hotel-book day": DAYS,
    "hotel-book people": COUNTS,
    "hotel-book stay": COUNTS,
    "hotel-internet": YESNO,
    "hotel-name": ["acorn guest house", "the acorn guest house", "alexander bed and breakfast",
                   "gonville hotel", "huntingdon marriott hotel"],
    "hotel-parking": YESNO,
    "hotel-pricerange": ["cheap", "moderate", "expensive"],
    "hotel-stars": ["0", "1", "2", "3", "4", "5", "four"],
    "hotel-type": ["hotel", "guest house", "guesthouse"],
    "restaurant-area": AREAS,
    "restaurant-book day": DAYS,
    "restaurant-book people": COUNTS,
    "restaurant-book time": ["17:30", "18:00"],
    "restaurant-food": ["british", "indian", "italian", "chinese"],
    "restaurant-name": ["midsummer house restaurant", "pizza hut city centre",
                        "the golden curry", "cocum"],
    "restaurant-pricerange": ["cheap", "moderate", "expensive"],
    "taxi-arriveby": ["17:00"],
    "taxi-departure": ["gonville hotel", "clare college"],
    "taxi-destination": ["acorn guest house", "gonville hotel", "the golden curry",
                         "castle galleries"],
    "taxi-leaveat": ["09:15"],
    "train-arriveby": ["05:51", "06:07"],
    "train-book people": COUNTS,
    "train-day": DAYS,
    "train-departure": ["cambridge", "ely", "norwich", "stansted airport"],
    "train-destination": ["london kings cross", "cambridge", "ely"],
    "train-leaveat": ["05:00", "05:24"],
}

DIALOGUES = [
    {
        "id": "d01",
        "domains": ["hotel", "taxi"],
        "turns": [
            {
                "agent": "",
                "user": "i need a hotel in the north with free parking",
                "gold_state": {"hotel-area": "north", "hotel-parking": "yes"},
            },
            {
                "agent": "acorn guest house is a lovely four star guest house in the north .",
                "user": "sounds good , please book it for me",
                "gold_state": {
                    "hotel-area": "north", "hotel-parking": "yes",
                    "hotel-name": "acorn guest house", "hotel-stars": "4",
                },
            },
            {
                "agent": "booked ! anything else ?",
                "user": "yes , a taxi to the hotel please , leaving at 9:15",
                "gold_state": {
                    "hotel-area": "north", "hotel-parking": "yes",
                    "hotel-name": "acorn guest house", "hotel-stars": "4",
                    "taxi-destination": "acorn guest house", "taxi-leaveat": "09:15",
                },
                "references": {"taxi-destination": "hotel-name"},
            },
        ],
    },
    {
        "id": "d02",
        "domains": ["restaurant"],
        "turns": [
            {
                "agent": "",
                "user": "i want an expensive indian restaurant in the west",
                "gold_state": {
                    "restaurant-food": "indian", "restaurant-pricerange": "expensive",
                    "restaurant-area": "west",
                },
            },
            {
                "agent": "cocum is an expensive indian place in the west .",
                "user": "actually , could we look in the centre instead",
                "gold_state": {
                    "restaurant-food": "indian", "restaurant-pricerange": "expensive",
                    "restaurant-area": "centre",
                },
            },
            {
                "agent": "the golden curry matches your needs . book it ?",
                "user": "yes for 4 people at 17:30 on friday , and you can drop the price limit",
                "gold_state": {
                    "restaurant-food": "indian", "restaurant-area": "centre",
                    "restaurant-book people": "4", "restaurant-book time": "17:30",
                    "restaurant-book day": "friday",
                },
            },
            {
                "agent": "done ! your table is reserved .",
                "user": "great , that is all for today , goodbye",
                "gold_state": {
                    "restaurant-food": "indian", "restaurant-area": "centre",
                    "restaurant-book people": "4", "restaurant-book time": "17:30",
                    "restaurant-book day": "friday",
                },
            },
        ],
    },
    {
        "id": "d03",
        "domains": ["attraction", "restaurant"],
        "turns": [
            {
                "agent": "",
                "user": "i am looking for a museum in the centre of town",
                "gold_state": {"attraction-type": "museum", "attraction-area": "centre"},
            },
            {
                "agent": "castle galleries is a nice museum in the centre .",
                "user": "perfect , also find me a restaurant in the same area as the museum",
                "gold_state": {
                    "attraction-type": "museum", "attraction-area": "centre",
                    "restaurant-area": "centre",
                },
                "references": {"restaurant-area": "attraction-area"},
            },
            {
                "agent": "sure , any cuisine preference ?",
                "user": "british food please , and make it expensive",
                "gold_state": {
                    "attraction-type": "museum", "attraction-area": "centre",
                    "restaurant-area": "centre", "restaurant-food": "british",
                    "restaurant-pricerange": "expensive",
                },
            },
        ],
    },
    {
        "id": "d04",
        "domains": ["train"],
        "turns": [
            {
                "agent": "",
                "user": "i need a train from cambridge to london kings cross",
                "gold_state": {
                    "train-departure": "cambridge", "train-destination": "london kings cross",
                },
            },
            {
                "agent": "what day will you travel ?",
                "user": "friday , and i do not care what time it leaves",
                "gold_state": {
                    "train-departure": "cambridge", "train-destination": "london kings cross",
                    "train-day": "friday", "train-leaveat": "dontcare",
                },
            },
            {
                "agent": "tr0001 leaves friday morning , shall i book it ?",
                "user": "yes , book it for 2 people please",
                "gold_state": {
                    "train-departure": "cambridge", "train-destination": "london kings cross",
                    "train-day": "friday", "train-leaveat": "dontcare",
                    "train-book people": "2",
                },
            },
        ],
    },
    {
        "id": "d05",
        "domains": ["hotel"],
        "turns": [
            {
                "agent": "",
                "user": "hello , i am looking for a cheap guest house to stay at",
                "gold_state": {"hotel-pricerange": "cheap", "hotel-type": "guest house"},
            },
            {
                "agent": "alexander bed and breakfast is a cheap guest house in the centre .",
                "user": "nice , it must have internet included though",
                "gold_state": {
                    "hotel-pricerange": "cheap", "hotel-type": "guest house",
                    "hotel-internet": "yes",
                },
            },
            {
                "agent": "it does have wifi ! anything else ?",
                "user": "no thanks , that will be everything",
                "gold_state": {
                    "hotel-pricerange": "cheap", "hotel-type": "guest house",
                    "hotel-internet": "yes",
                },
            },
        ],
    },
]

AMBIGUOUS_DB = {
    "restaurant": [
        {"name": "riverside brasserie", "address": "doubletree by hilton"},
        {"name": "riverside brasseria", "address": "quayside bridge street"},
    ]
}

AMBIGUOUS_ONTOLOGY = {"restaurant-name": ["riverside brasserie"]}


def main() -> None:
    FIXTURES.mkdir(parents=True, exist_ok=True)
    (FIXTURES / "db").mkdir(exist_ok=True)
    (FIXTURES / "ambiguous").mkdir(exist_ok=True)

    (FIXTURES / "schema.json").write_text(json.dumps(SCHEMA, indent=2) + "\n")
    (FIXTURES / "ontology.json").write_text(json.dumps(ONTOLOGY, indent=2) + "\n")
    for domain, records in DB.items():
        (FIXTURES / "db" / f"{domain}_db.json").write_text(json.dumps(records, indent=2) + "\n")
    with open(FIXTURES / "dialogues.jsonl", "w") as fh:
        for dialogue in DIALOGUES:
            fh.write(json.dumps(dialogue) + "\n")

    (FIXTURES / "ambiguous" / "db.json").write_text(json.dumps(AMBIGUOUS_DB, indent=2) + "\n")
    (FIXTURES / "ambiguous" / "ontology.json").write_text(
        json.dumps(AMBIGUOUS_ONTOLOGY, indent=2) + "\n"
    )

    schema = load_schema(FIXTURES / "schema.json")
    dialogues = load_dialogues(FIXTURES / "dialogues.jsonl")
    hasher = HashingEmbedder(dim=64)
    vectors = {}
    for dialogue in dialogues:
        for example in derive_turn_examples(dialogue, schema):
            vectors[example.id] = hasher.embed(encode_context_text(example.context))
    write_embeddings(FIXTURES / "embeddings.jsonl", vectors)

    # Golden prompts: two pool examples and the d01:3 query, frozen.
    pool = sample_few_shot(dialogues, 1.0, 0, schema)
    examples = [pool.by_id("d02:1"), pool.by_id("d01:1")]
    query_turn = dialogues[0].turns[2]
    query = TurnContext(
        prev_state=dialogues[0].turns[1].gold_state,
        agent_utt=query_turn.agent_utt,
        user_utt=query_turn.user_utt,
    )
    (FIXTURES / "golden_prompt.txt").write_text(build_prompt(schema, examples, query))
    (FIXTURES / "golden_inverted.txt").write_text(build_inverted_prompt(schema, examples))
    print(f"fixtures written to {FIXTURES}")


if __name__ == "__main__":
    main()
