"""Canonicalization of predicted slot values.

Pipeline: every informable slot gets a set of canonical forms (schema values
for categorical slots, database values otherwise; entity names with addresses
double as taxi/train location canonicals; any valid hh:mm is a canonical
time). A predicted surface form links to a canonical form when any of its
aliases reaches a fuzzy-match score of 90, and is then replaced by the most
likely surface for that canonical, estimated from gold-label counts smoothed
with 10 pseudo-counts per ontology listing. Gold labels themselves are never
normalized.
"""

from __future__ import annotations

import json
import re
import threading
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from .corpus import CanonicalSchema, EntityDatabase, Ontology
from .state import LiteralValue, SlotName, StateChange

LINK_THRESHOLD = 90
ONTOLOGY_PSEUDO_COUNT = 10

# Suffixes a speaker may attach to or drop from an entity name.
DOMAIN_SUFFIXES = (
    "hotel",
    "guest house",
    "guesthouse",
    "restaurant",
    "museum",
    "college",
    "church",
    "theatre",
    "cinema",
    "gallery",
    "attraction",
)

_NUMBER_WORDS = {
    "0": "zero", "1": "one", "2": "two", "3": "three", "4": "four",
    "5": "five", "6": "six", "7": "seven", "8": "eight", "9": "nine",
    "10": "ten",
}
_WORD_NUMBERS = {w: d for d, w in _NUMBER_WORDS.items()}

_WS = re.compile(r"\s+")
_TIME = re.compile(r"^(\d{1,2}):(\d{2})$")

LOCATION_SLOTS = ("departure", "destination")


class AmbiguousLink(ValueError):
    """A surface form links to more than one canonical form."""


def _fold(text: str) -> str:
    return _WS.sub(" ", text.casefold()).strip()


def canonical_time(surface: str) -> str | None:
    """Zero-padded hh:mm if the surface is a valid time, else None."""
    match = _TIME.match(surface.strip())
    if not match:
        return None
    hours, minutes = int(match.group(1)), int(match.group(2))
    if hours > 23 or minutes > 59:
        return None
    return f"{hours:02d}:{minutes:02d}"


def fuzzy_ratio(a: str, b: str) -> int:
    """Similarity in [0, 100] from edit distance with substitution cost 2.

    ratio = round(100 * (|a| + |b| - D) / (|a| + |b|)) over case-folded
    inputs; two empty strings score 100.
    """
    a, b = a.casefold(), b.casefold()
    if not a and not b:
        return 100
    if len(a) < len(b):
        a, b = b, a
    previous = list(range(len(b) + 1))  # insertions only
    for i, ca in enumerate(a, start=1):
        current = [i]  # deletions only
        for j, cb in enumerate(b, start=1):
            substitution = previous[j - 1] + (0 if ca == cb else 2)
            current.append(min(substitution, previous[j] + 1, current[j - 1] + 1))
        previous = current
    distance = previous[-1]
    total = len(a) + len(b)
    return int(round(100 * (total - distance) / total))


def _swap_number_tokens(text: str) -> set[str]:
    variants = set()
    tokens = text.split(" ")
    for i, token in enumerate(tokens):
        swapped = _NUMBER_WORDS.get(token) or _WORD_NUMBERS.get(token)
        if swapped:
            variants.add(" ".join(tokens[:i] + [swapped] + tokens[i + 1 :]))
    return variants


def aliases(surface: str, suffixes: tuple[str, ...] = DOMAIN_SUFFIXES) -> set[str]:
    """Acceptable rephrasings of a surface form.

    Closure over: leading-article add/remove, at most one domain-suffix add
    or remove (from the overridable `suffixes` inventory), digit/word swaps
    for zero..ten; everything case-folded with whitespace collapsed. The
    input itself is always included.
    """
    start = _fold(surface)
    # Track the most permissive suffix budget (False < True) each variant
    # was expanded with, so the suffix rule applies at most once per chain.
    expanded: dict[str, bool] = {}
    stack: list[tuple[str, bool]] = [(start, False)]
    while stack:
        text, suffix_used = stack.pop()
        if text in expanded and expanded[text] <= suffix_used:
            continue
        expanded[text] = suffix_used
        variants: set[tuple[str, bool]] = set()
        if text.startswith("the "):
            variants.add((text[4:], suffix_used))
        else:
            variants.add(("the " + text, suffix_used))
        variants.update((v, suffix_used) for v in _swap_number_tokens(text))
        if not suffix_used:
            for suffix in suffixes:
                if text.endswith(" " + suffix):
                    variants.add((text[: -len(suffix) - 1], True))
                else:
                    variants.add((text + " " + suffix, True))
        for variant, used in variants:
            cleaned = _fold(variant)
            if cleaned:
                stack.append((cleaned, used))
    return set(expanded)


@dataclass
class CanonicalMap:
    """Per-slot canonical forms plus preferred surfaces and a link cache."""

    canonicals: Mapping[SlotName, frozenset[str]]
    preferred: Mapping[SlotName, Mapping[str, str]]
    time_slots: frozenset[SlotName]
    _cache: dict = field(default_factory=dict, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def canonical_forms(self, slot: SlotName) -> frozenset[str]:
        return self.canonicals.get(slot, frozenset())

    def preferred_surface(self, slot: SlotName, canonical: str) -> str:
        return self.preferred.get(slot, {}).get(canonical, canonical)


def link(slot: SlotName, surface: str, cmap: CanonicalMap) -> str | None:
    """Canonical form for a surface, or None when nothing matches.

    A surface links when any alias scores >= 90 against a canonical form;
    two qualifying canonicals raise AmbiguousLink. Results are cached.
    Empty surfaces never link (their alias closure contains bare suffixes).
    """
    if not _fold(surface):
        return None
    key = (slot, _fold(surface))
    with cmap._lock:
        if key in cmap._cache:
            return cmap._cache[key]
    result = _link_uncached(slot, surface, cmap)
    with cmap._lock:
        cmap._cache[key] = result
    return result


def _link_uncached(slot: SlotName, surface: str, cmap: CanonicalMap) -> str | None:
    surface_aliases = aliases(surface)
    if slot in cmap.time_slots:
        times = {t for t in (canonical_time(a) for a in surface_aliases) if t}
        if len(times) > 1:
            raise AmbiguousLink(f"{slot}: {surface!r} matches times {sorted(times)}")
        return next(iter(times)) if times else None
    matched: set[str] = set()
    for canonical in cmap.canonical_forms(slot):
        if any(fuzzy_ratio(alias, canonical) >= LINK_THRESHOLD for alias in surface_aliases):
            matched.add(canonical)
    if len(matched) > 1:
        raise AmbiguousLink(f"{slot}: {surface!r} matches {sorted(matched)}")
    return next(iter(matched)) if matched else None


def _slot_canonicals(
    db: EntityDatabase, slot: SlotName, categorical: bool, values: tuple[str, ...] | None
) -> frozenset[str]:
    if categorical and values:
        return frozenset(_fold(v) for v in values)
    forms = {_fold(v) for v in db.values_for(slot.domain, slot.slot)}
    if slot.domain in ("taxi", "train") and slot.slot in LOCATION_SLOTS:
        forms.update(_fold(name) for name in db.addressed_entity_names())
    return frozenset(forms)


def build_canonical_map(
    schema: CanonicalSchema,
    db: EntityDatabase,
    ontology: Ontology,
    gold_counts: Mapping[SlotName, Mapping[str, int]] | None = None,
    verify: bool = True,
) -> CanonicalMap:
    """Assemble canonical forms and preferred surfaces for every slot.

    With ``verify`` the ontology is audited for surfaces linking to more
    than one canonical form (raises AmbiguousLink). Preferred surfaces use
    gold counts (when given) plus 10 pseudo-counts per ontology listing; with
    no gold counts the ontology alone decides.
    """
    canonicals: dict[SlotName, frozenset[str]] = {}
    time_slots = set()
    for slot_name in schema.slot_names():
        sdef = schema.slot_def(slot_name)
        assert sdef is not None
        if sdef.kind == "time":
            time_slots.add(slot_name)
            continue
        canonicals[slot_name] = _slot_canonicals(db, slot_name, sdef.categorical, sdef.values)
    cmap = CanonicalMap(
        canonicals=canonicals,
        preferred={},
        time_slots=frozenset(time_slots),
    )

    counts: dict[SlotName, dict[str, Counter]] = {}

    def bump(slot: SlotName, surface: str, weight: int) -> None:
        canonical = link(slot, surface, cmap)
        if canonical is None:
            return
        counts.setdefault(slot, {}).setdefault(canonical, Counter())[surface] += weight

    ambiguities = []
    for slot_name in schema.slot_names():
        for surface in ontology.surfaces(slot_name):
            try:
                bump(slot_name, surface, ONTOLOGY_PSEUDO_COUNT)
            except AmbiguousLink as exc:
                ambiguities.append(str(exc))
    if verify and ambiguities:
        raise AmbiguousLink("; ".join(ambiguities))
    if gold_counts:
        for slot_name, surfaces in gold_counts.items():
            for surface, count in surfaces.items():
                try:
                    bump(slot_name, surface, count)
                except AmbiguousLink:
                    if verify:
                        raise

    preferred: dict[SlotName, dict[str, str]] = {}
    for slot_name, per_canonical in counts.items():
        chosen = {}
        for canonical, surface_counts in per_canonical.items():
            best = min(surface_counts.items(), key=lambda kv: (-kv[1], kv[0]))
            chosen[canonical] = best[0]
        preferred[slot_name] = chosen
    cmap.preferred = preferred
    return cmap


@dataclass(frozen=True)
class AuditReport:
    links: tuple[dict, ...]
    ambiguities: tuple[dict, ...]

    def to_jsonable(self) -> dict:
        return {"links": list(self.links), "ambiguities": list(self.ambiguities)}

    def write(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_jsonable(), indent=2, sort_keys=True, ensure_ascii=False) + "\n",
            encoding="utf-8",
        )


def audit_links(cmap: CanonicalMap, ontology: Ontology) -> AuditReport:
    """Resolve every ontology surface; collect links and ambiguities."""
    links = []
    ambiguities = []
    for slot in sorted(ontology.surface_forms):
        for surface in ontology.surfaces(slot):
            try:
                canonical = link(slot, surface, cmap)
            except AmbiguousLink:
                candidates = sorted(
                    c
                    for c in cmap.canonical_forms(slot)
                    if any(fuzzy_ratio(a, c) >= LINK_THRESHOLD for a in aliases(surface))
                )
                ambiguities.append(
                    {"slot": str(slot), "surface": surface, "canonicals": candidates}
                )
                continue
            if canonical is not None:
                links.append({"slot": str(slot), "surface": surface, "canonical": canonical})
    return AuditReport(tuple(links), tuple(ambiguities))


def normalize_prediction(delta: StateChange, cmap: CanonicalMap) -> StateChange:
    """Replace literal values with their preferred surfaces.

    Unlinked (and ambiguous) values pass through unchanged; references,
    dontcare, and removals are untouched; times come out zero-padded.
    """
    updates = dict(delta.updates)
    for slot, value in delta.updates.items():
        if not isinstance(value, LiteralValue):
            continue
        try:
            canonical = link(slot, value.text, cmap)
        except AmbiguousLink:
            continue
        if canonical is None:
            continue
        if slot in cmap.time_slots:
            updates[slot] = LiteralValue(canonical)
        else:
            updates[slot] = LiteralValue(cmap.preferred_surface(slot, canonical))
    return StateChange(updates, delta.removals)
