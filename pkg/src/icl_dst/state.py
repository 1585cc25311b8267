"""Dialogue-state data model and the state-change algebra.

A dialogue state maps schema slots to string values. Turn-level updates are
expressed as state changes (slot updates plus slot removals) which are applied
on top of the previous state. Slot values inside a change may be literal
strings, "dontcare", or references to another slot's current value, which is
how linguistic coreference ("the same area as my hotel") is represented.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Union


class UnresolvableReference(KeyError):
    """A slot reference points at a slot with no value in the base state."""


@dataclass(frozen=True, order=True)
class SlotName:
    """Schema slot identified by (domain, slot), e.g. ("hotel", "area")."""

    domain: str
    slot: str

    def __post_init__(self) -> None:
        if not self.domain or not self.slot:
            raise ValueError("slot name parts must be non-empty")
        if self.domain != self.domain.lower() or self.slot != self.slot.lower():
            raise ValueError(f"slot names are lowercase: {self.domain!r}-{self.slot!r}")

    @classmethod
    def parse(cls, text: str) -> "SlotName":
        """Parse the serialized "domain-slot" form (split on the first dash)."""
        domain, sep, slot = text.partition("-")
        if not sep or not domain or not slot:
            raise ValueError(f"expected 'domain-slot', got {text!r}")
        return cls(domain, slot)

    def __str__(self) -> str:
        return f"{self.domain}-{self.slot}"


@dataclass(frozen=True)
class LiteralValue:
    """A verbatim string value."""

    text: str

    def __post_init__(self) -> None:
        if not self.text:
            raise ValueError("literal slot values must be non-empty")


@dataclass(frozen=True)
class SlotRef:
    """A value defined by coreference to another slot's current value."""

    target: SlotName


@dataclass(frozen=True)
class DontCare:
    """The user explicitly does not care about this slot."""


DONT_CARE = DontCare()
DONTCARE_TEXT = "dontcare"

SlotValue = Union[LiteralValue, SlotRef, DontCare]

# Token used for removals when comparing state changes as (slot, value) pairs.
DELETE_TOKEN = "[DELETE]"


@dataclass(frozen=True)
class DialogueState:
    """Full dialogue state: a slot -> literal value mapping (refs resolved)."""

    entries: Mapping[SlotName, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        entries = dict(self.entries)
        for slot, value in entries.items():
            if not isinstance(slot, SlotName):
                raise TypeError(f"state keys must be SlotName, got {slot!r}")
            if not value:
                raise ValueError(f"empty value for {slot}")
        object.__setattr__(self, "entries", entries)

    @classmethod
    def from_strings(cls, mapping: Mapping[str, str]) -> "DialogueState":
        """Build a state from serialized "domain-slot" keys."""
        return cls({SlotName.parse(k): v for k, v in mapping.items()})

    def as_strings(self) -> dict[str, str]:
        """Serialize to "domain-slot" keys, sorted for stable output."""
        return {str(s): v for s, v in sorted(self.entries.items())}

    def get(self, slot: SlotName) -> str | None:
        return self.entries.get(slot)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[SlotName]:
        return iter(self.entries)


EMPTY_STATE = DialogueState()


@dataclass(frozen=True)
class StateChange:
    """Turn-level delta: slot updates plus slot removals (disjoint sets)."""

    updates: Mapping[SlotName, SlotValue] = field(default_factory=dict)
    removals: frozenset[SlotName] = frozenset()

    def __post_init__(self) -> None:
        updates = dict(self.updates)
        removals = frozenset(self.removals)
        overlap = set(updates) & removals
        if overlap:
            names = ", ".join(str(s) for s in sorted(overlap))
            raise ValueError(f"slots both updated and removed: {names}")
        object.__setattr__(self, "updates", updates)
        object.__setattr__(self, "removals", removals)

    def is_empty(self) -> bool:
        return not self.updates and not self.removals

    def touched_slots(self) -> frozenset[SlotName]:
        return frozenset(self.updates) | self.removals

    def to_jsonable(self) -> dict:
        """JSON-friendly form used in prediction dumps and checkpoints."""
        updates = {}
        for slot, value in sorted(self.updates.items()):
            if isinstance(value, LiteralValue):
                updates[str(slot)] = {"lit": value.text}
            elif isinstance(value, SlotRef):
                updates[str(slot)] = {"ref": str(value.target)}
            else:
                updates[str(slot)] = {"dontcare": True}
        return {"updates": updates, "removals": sorted(str(s) for s in self.removals)}

    @classmethod
    def from_jsonable(cls, data: Mapping) -> "StateChange":
        updates: dict[SlotName, SlotValue] = {}
        for key, spec in data.get("updates", {}).items():
            slot = SlotName.parse(key)
            if "lit" in spec:
                updates[slot] = LiteralValue(spec["lit"])
            elif "ref" in spec:
                updates[slot] = SlotRef(SlotName.parse(spec["ref"]))
            else:
                updates[slot] = DONT_CARE
        removals = frozenset(SlotName.parse(s) for s in data.get("removals", ()))
        return cls(updates, removals)


EMPTY_CHANGE = StateChange()


@dataclass(frozen=True)
class TurnContext:
    """Input for one turn: previous state plus the current utterance pair.

    The agent utterance may be empty for user-initiated first turns.
    """

    prev_state: DialogueState
    agent_utt: str
    user_utt: str


@dataclass(frozen=True)
class DialogueTurn:
    agent_utt: str
    user_utt: str
    gold_state: DialogueState
    # Optional coreference annotation: updated slot -> slot it refers to.
    references: Mapping[SlotName, SlotName] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "references", dict(self.references))


@dataclass(frozen=True)
class Dialogue:
    """A full dialogue with per-turn gold states (kept for data ingestion)."""

    id: str
    turns: tuple[DialogueTurn, ...]
    domains: frozenset[str] = frozenset()

    def __post_init__(self) -> None:
        object.__setattr__(self, "turns", tuple(self.turns))
        object.__setattr__(self, "domains", frozenset(self.domains))
        if not self.turns:
            raise ValueError(f"dialogue {self.id!r} has no turns")


def resolve_value(state: DialogueState, value: SlotValue) -> str:
    """Resolve a slot value to its literal string against `state`."""
    if isinstance(value, LiteralValue):
        return value.text
    if isinstance(value, DontCare):
        return DONTCARE_TEXT
    if isinstance(value, SlotRef):
        resolved = state.get(value.target)
        if resolved is None:
            raise UnresolvableReference(str(value.target))
        return resolved
    raise TypeError(f"not a slot value: {value!r}")


def apply_state_change(state: DialogueState, delta: StateChange) -> DialogueState:
    """Apply removals then updates, returning a new state.

    References resolve against the pre-delta state only; chaining onto
    updates from the same delta is deliberately not supported.
    """
    entries = dict(state.entries)
    for slot in delta.removals:
        entries.pop(slot, None)
    for slot, value in delta.updates.items():
        entries[slot] = resolve_value(state, value)
    return DialogueState(entries)


def diff_states(prev: DialogueState, next_state: DialogueState) -> StateChange:
    """Minimal delta transforming `prev` into `next_state` (literals only)."""
    updates: dict[SlotName, SlotValue] = {}
    for slot, value in next_state.entries.items():
        if prev.get(slot) != value:
            updates[slot] = LiteralValue(value)
    removals = frozenset(s for s in prev.entries if s not in next_state.entries)
    return StateChange(updates, removals)


def substitute_coreferents(delta: StateChange) -> dict[SlotName, str]:
    """Replace referential values with the referenced slot's name.

    The result maps each updated slot to a comparison token: literal text,
    "dontcare", or the "domain-slot" name of the referenced slot. This makes
    downstream similarity independent of the literal a reference resolves to.
    """
    out: dict[SlotName, str] = {}
    for slot, value in delta.updates.items():
        if isinstance(value, SlotRef):
            out[slot] = str(value.target)
        elif isinstance(value, DontCare):
            out[slot] = DONTCARE_TEXT
        else:
            out[slot] = value.text
    return out


def f1(a: Iterable, b: Iterable) -> float:
    """Set-overlap F1: 2|a&b| / (|a|+|b|); 1.0 when both empty."""
    sa, sb = set(a), set(b)
    if not sa and not sb:
        return 1.0
    if not sa or not sb:
        return 0.0
    return 2.0 * len(sa & sb) / (len(sa) + len(sb))


def _delta_pairs(delta: StateChange) -> set[tuple[SlotName, str]]:
    substituted = substitute_coreferents(delta)
    pairs = set(substituted.items())
    pairs.update((slot, DELETE_TOKEN) for slot in delta.removals)
    return pairs


def sim_f1(da: StateChange, db: StateChange) -> float:
    """Ground-truth similarity between two state changes.

    Mean of the slot-name F1 and the slot-value-pair F1, computed after
    coreference substitution. Removals count as (slot, "[DELETE]") pairs so
    that deletions influence the score.
    """
    pairs_a, pairs_b = _delta_pairs(da), _delta_pairs(db)
    slots_a = {slot for slot, _ in pairs_a}
    slots_b = {slot for slot, _ in pairs_b}
    return 0.5 * f1(slots_a, slots_b) + 0.5 * f1(pairs_a, pairs_b)
