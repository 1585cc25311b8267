"""Schema, ontology, database, and dialogue-corpus ingestion.

File formats (all UTF-8):
  schema    JSON  {"domains": [{"name", "slots": [{"name", "categorical", "values"?, "kind"}]}]}
  dialogues JSONL one per line: {"id", "domains", "turns": [{"agent", "user",
            "gold_state": {"domain-slot": "value"}, "references"?: {"domain-slot": "domain-slot"}}]}
  ontology  JSON  {"domain-slot": ["surface", ...]}
  database  directory of <domain>_db.json files (JSON arrays of records), or a
            single JSON object mapping domain -> record list
"""

from __future__ import annotations

import json
import math
import random
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

from .state import (
    DONT_CARE,
    DONTCARE_TEXT,
    Dialogue,
    DialogueState,
    DialogueTurn,
    LiteralValue,
    SlotName,
    SlotRef,
    StateChange,
    TurnContext,
    diff_states,
)

VALUE_KINDS = ("text", "time", "boolean", "integer", "location")


class SchemaParse(ValueError):
    """The schema file is malformed or violates a schema invariant."""


def ident(name: str) -> str:
    """Identifier form of a domain or slot name (spaces become underscores)."""
    return name.replace(" ", "_")


@dataclass(frozen=True)
class SlotDef:
    name: str
    categorical: bool
    values: tuple[str, ...] | None
    kind: str


@dataclass(frozen=True)
class DomainDef:
    name: str
    slots: tuple[SlotDef, ...]

    def slot(self, name: str) -> SlotDef | None:
        for s in self.slots:
            if s.name == name:
                return s
        return None


@dataclass(frozen=True)
class CanonicalSchema:
    domains: tuple[DomainDef, ...]

    def __post_init__(self) -> None:
        by_name = {}
        by_ident = {}
        slot_idents: dict[str, dict[str, str]] = {}
        for dom in self.domains:
            by_name[dom.name] = dom
            by_ident[ident(dom.name)] = dom
            slot_idents[dom.name] = {ident(s.name): s.name for s in dom.slots}
        object.__setattr__(self, "_by_name", by_name)
        object.__setattr__(self, "_by_ident", by_ident)
        object.__setattr__(self, "_slot_idents", slot_idents)

    def domain(self, name: str) -> DomainDef | None:
        return self._by_name.get(name)

    def domain_by_ident(self, name: str) -> DomainDef | None:
        return self._by_ident.get(name)

    def slot_by_ident(self, domain: str, slot_ident: str) -> str | None:
        return self._slot_idents.get(domain, {}).get(slot_ident)

    def slot_def(self, slot: SlotName) -> SlotDef | None:
        dom = self._by_name.get(slot.domain)
        return dom.slot(slot.slot) if dom else None

    def has_slot(self, slot: SlotName) -> bool:
        return self.slot_def(slot) is not None

    def slot_names(self) -> list[SlotName]:
        return [SlotName(d.name, s.name) for d in self.domains for s in d.slots]

    def domain_names(self) -> list[str]:
        return [d.name for d in self.domains]


def load_schema(path: str | Path) -> CanonicalSchema:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaParse(f"cannot read schema {path}: {exc}") from exc
    if not isinstance(raw, dict) or not isinstance(raw.get("domains"), list):
        raise SchemaParse("schema must be an object with a 'domains' list")
    domains = []
    seen_domains = set()
    for dom in raw["domains"]:
        name = dom.get("name")
        if not name or not isinstance(name, str) or name != name.lower():
            raise SchemaParse(f"bad domain name: {name!r}")
        if name in seen_domains:
            raise SchemaParse(f"duplicate domain {name!r}")
        seen_domains.add(name)
        slots = []
        seen_slots: set[str] = set()
        seen_idents: set[str] = set()
        for slot in dom.get("slots", []):
            sname = slot.get("name")
            if not sname or not isinstance(sname, str) or sname != sname.lower():
                raise SchemaParse(f"bad slot name {sname!r} in domain {name!r}")
            if sname in seen_slots or ident(sname) in seen_idents:
                raise SchemaParse(f"duplicate slot {sname!r} in domain {name!r}")
            seen_slots.add(sname)
            seen_idents.add(ident(sname))
            kind = slot.get("kind", "text")
            if kind not in VALUE_KINDS:
                raise SchemaParse(f"unknown value kind {kind!r} for {name}-{sname}")
            categorical = bool(slot.get("categorical", False))
            values = slot.get("values")
            if categorical:
                if not values:
                    raise SchemaParse(f"categorical slot {name}-{sname} needs values")
                values = tuple(str(v) for v in values)
            else:
                values = tuple(str(v) for v in values) if values else None
            slots.append(SlotDef(sname, categorical, values, kind))
        if not slots:
            raise SchemaParse(f"domain {name!r} has no slots")
        domains.append(DomainDef(name, tuple(slots)))
    if not domains:
        raise SchemaParse("schema has no domains")
    return CanonicalSchema(tuple(domains))


@dataclass(frozen=True)
class Ontology:
    """Observed surface forms per slot."""

    surface_forms: Mapping[SlotName, tuple[str, ...]]

    def __post_init__(self) -> None:
        object.__setattr__(self, "surface_forms", dict(self.surface_forms))

    def surfaces(self, slot: SlotName) -> tuple[str, ...]:
        return self.surface_forms.get(slot, ())


def load_ontology(path: str | Path) -> Ontology:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    forms: dict[SlotName, tuple[str, ...]] = {}
    for key, surfaces in raw.items():
        if not surfaces:
            raise ValueError(f"ontology entry {key!r} lists no surface forms")
        forms[SlotName.parse(key)] = tuple(str(s) for s in surfaces)
    return Ontology(forms)


@dataclass(frozen=True)
class EntityDatabase:
    """Per-domain entity records with at least a name and optional address."""

    records: Mapping[str, tuple[Mapping[str, str], ...]]

    def __post_init__(self) -> None:
        records = {d: tuple(rs) for d, rs in self.records.items()}
        for domain, rs in records.items():
            for rec in rs:
                if not rec.get("name") and not rec.get("departure"):
                    # Travel-leg records (trains) carry no entity name.
                    raise ValueError(f"record without name in domain {domain!r}")
        object.__setattr__(self, "records", records)

    @classmethod
    def load(cls, path: str | Path) -> "EntityDatabase":
        path = Path(path)
        if path.is_dir():
            records = {}
            for dbfile in sorted(path.glob("*_db.json")):
                domain = dbfile.name[: -len("_db.json")]
                records[domain] = tuple(json.loads(dbfile.read_text(encoding="utf-8")))
            return cls(records)
        raw = json.loads(path.read_text(encoding="utf-8"))
        return cls({d: tuple(rs) for d, rs in raw.items()})

    def values_for(self, domain: str, key: str) -> set[str]:
        out = set()
        for rec in self.records.get(domain, ()):
            value = rec.get(key)
            if value:
                out.add(str(value))
        return out

    def addressed_entity_names(self) -> set[str]:
        """Names of all entities, in any domain, that carry an address."""
        names = set()
        for recs in self.records.values():
            for rec in recs:
                if rec.get("address") and rec.get("name"):
                    names.add(str(rec["name"]))
        return names


@dataclass(frozen=True)
class Example:
    """A retrievable (turn context, state change) pair."""

    id: str
    context: TurnContext
    delta: StateChange


@dataclass(frozen=True)
class TrainingPool:
    examples: tuple[Example, ...]

    def __post_init__(self) -> None:
        examples = tuple(self.examples)
        ids = [e.id for e in examples]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise ValueError(f"duplicate example ids: {dupes}")
        object.__setattr__(self, "examples", examples)
        object.__setattr__(self, "_by_id", {e.id: e for e in examples})

    def by_id(self, example_id: str) -> Example:
        return self._by_id[example_id]

    def ids(self) -> list[str]:
        return [e.id for e in self.examples]

    def __len__(self) -> int:
        return len(self.examples)

    def __iter__(self) -> Iterator[Example]:
        return iter(self.examples)


def load_dialogues(path: str | Path) -> list[Dialogue]:
    dialogues = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{line_no}: bad JSON: {exc}") from exc
            turns = []
            for turn in raw["turns"]:
                refs = {
                    SlotName.parse(k): SlotName.parse(v)
                    for k, v in turn.get("references", {}).items()
                }
                turns.append(
                    DialogueTurn(
                        agent_utt=turn.get("agent", ""),
                        user_utt=turn["user"],
                        gold_state=DialogueState.from_strings(turn["gold_state"]),
                        references=refs,
                    )
                )
            dialogues.append(
                Dialogue(id=raw["id"], turns=tuple(turns), domains=frozenset(raw.get("domains", ())))
            )
    return dialogues


def example_id(dialogue_id: str, turn_index: int) -> str:
    return f"{dialogue_id}:{turn_index}"


def _referencing_delta(
    delta: StateChange,
    prev_state: DialogueState,
    annotations: Mapping[SlotName, SlotName],
    schema: CanonicalSchema | None,
) -> StateChange:
    """Canonicalize gold delta values: dontcare variants and references.

    A literal "dontcare" becomes the dedicated variant. For references,
    explicit annotations win; otherwise a value-equality heuristic applies to
    non-categorical slots whose new value matches exactly one other slot's
    value in the previous state.
    """
    updates: dict[SlotName, object] = dict(delta.updates)
    for slot, value in delta.updates.items():
        if not isinstance(value, LiteralValue):
            continue
        if value.text == DONTCARE_TEXT:
            updates[slot] = DONT_CARE
            continue
        annotated = annotations.get(slot)
        if annotated is not None:
            if prev_state.get(annotated) == value.text:
                updates[slot] = SlotRef(annotated)
            continue
        if schema is None:
            continue
        sdef = schema.slot_def(slot)
        if sdef is None or sdef.categorical:
            continue
        matches = [s for s, v in prev_state.entries.items() if s != slot and v == value.text]
        if len(matches) == 1:
            updates[slot] = SlotRef(matches[0])
    return StateChange(updates, delta.removals)


def derive_turn_examples(
    dialogue: Dialogue, schema: CanonicalSchema | None = None
) -> list[Example]:
    """Split a dialogue into per-turn (context, state change) examples.

    The context at turn t carries the gold state of turn t-1 (empty for the
    first turn); the delta is the minimal diff between consecutive gold
    states, with coreferent values rewritten as slot references.
    """
    examples = []
    prev = DialogueState()
    for t, turn in enumerate(dialogue.turns, start=1):
        if schema is not None:
            unknown = [s for s in turn.gold_state.entries if not schema.has_slot(s)]
            if unknown:
                raise ValueError(
                    f"{dialogue.id} turn {t}: gold slots not in schema: "
                    + ", ".join(str(s) for s in unknown)
                )
        delta = diff_states(prev, turn.gold_state)
        delta = _referencing_delta(delta, prev, turn.references, schema)
        context = TurnContext(prev_state=prev, agent_utt=turn.agent_utt, user_utt=turn.user_utt)
        examples.append(Example(id=example_id(dialogue.id, t), context=context, delta=delta))
        prev = turn.gold_state
    return examples


def sample_few_shot(
    dialogues: Sequence[Dialogue],
    fraction: float,
    seed: int,
    schema: CanonicalSchema | None = None,
) -> TrainingPool:
    """Sample whole dialogues uniformly without replacement, then pool turns.

    Sampling is by dialogue, never by turn; the draw is deterministic per
    seed and independent of the input ordering (dialogues are id-sorted
    before sampling).
    """
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    ordered = sorted(dialogues, key=lambda d: d.id)
    count = math.ceil(fraction * len(ordered))
    if count < len(ordered):
        rng = random.Random(seed)
        picked = sorted(rng.sample(range(len(ordered)), count))
        chosen = [ordered[i] for i in picked]
    else:
        chosen = ordered
    examples: list[Example] = []
    for dialogue in chosen:
        examples.extend(derive_turn_examples(dialogue, schema))
    return TrainingPool(tuple(examples))


def gold_value_counts(pool: Iterable[Example]) -> dict[SlotName, Counter]:
    """Occurrence counts of literal gold values per slot (for normalization)."""
    counts: dict[SlotName, Counter] = {}
    for example in pool:
        for slot, value in example.delta.updates.items():
            if isinstance(value, LiteralValue):
                counts.setdefault(slot, Counter())[value.text] += 1
    return counts
