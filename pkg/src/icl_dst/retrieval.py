"""Example embedding index, in-context example selection, and diagnostics.

The index stores one unit-normalized vector per pool example, so relevance
scores are plain dot products (equal to cosine for unit-norm queries; callers
normalize real query vectors). This module never computes text embeddings
itself; vectors arrive from an embeddings file or an embedding service.

Embedding file format: JSONL, one {"id": ..., "vector": [...]} per line.
Pair file format: JSONL, one {"anchor_id", "other_id", "label": "pos"|"neg"}.
"""

from __future__ import annotations

import json
import math
import random
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Collection, Mapping, Sequence

import numpy as np

from .corpus import Example, TrainingPool
from .state import TurnContext, sim_f1

UNIT_NORM_TOL = 1e-6


def encode_context_text(context: TurnContext) -> str:
    """Canonical single-line text form of a turn context, for embedding.

    State entries are sorted by slot name so that logically equal contexts
    serialize identically.
    """
    state_part = "; ".join(f"{slot}={value}" for slot, value in sorted(context.prev_state.entries.items()))
    parts = ["[state]"]
    if state_part:
        parts.append(state_part)
    parts.extend(["[system]", context.agent_utt, "[user]", context.user_utt])
    return " ".join(parts)


def normalize_vector(vector: Sequence[float] | np.ndarray) -> np.ndarray:
    arr = np.asarray(vector, dtype=np.float64)
    norm = float(np.linalg.norm(arr))
    if norm == 0.0 or not math.isfinite(norm):
        raise ValueError("cannot normalize zero or non-finite vector")
    return arr / norm


def load_embeddings(path: str | Path) -> dict[str, np.ndarray]:
    """Load and unit-normalize an embeddings JSONL file."""
    vectors: dict[str, np.ndarray] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            vectors[record["id"]] = normalize_vector(record["vector"])
    return vectors


def write_embeddings(path: str | Path, vectors: Mapping[str, Sequence[float]]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for key in sorted(vectors):
            values = [float(x) for x in np.asarray(vectors[key], dtype=np.float64)]
            fh.write(json.dumps({"id": key, "vector": values}) + "\n")


@dataclass(frozen=True)
class SelectionConfig:
    """Selection knobs: set size k, dissimilarity weight, candidate window."""

    k: int
    alpha: float = 0.0
    window: int = 100

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")
        if self.window < self.k:
            raise ValueError("candidate window must be >= k")


class ExampleIndex:
    """Immutable exact-scan index over pool example embeddings."""

    def __init__(self, ids: Sequence[str], matrix: np.ndarray, examples: Mapping[str, Example]):
        self._ids = tuple(ids)
        self._matrix = matrix
        self._row = {eid: i for i, eid in enumerate(self._ids)}
        self._examples = dict(examples)
        norms = np.linalg.norm(matrix, axis=1)
        if matrix.size and np.max(np.abs(norms - 1.0)) > UNIT_NORM_TOL:
            raise ValueError("index vectors must be unit-normalized")

    @classmethod
    def build(cls, pool: TrainingPool, vectors: Mapping[str, Sequence[float]]) -> "ExampleIndex":
        ids = sorted(pool.ids())
        missing = [eid for eid in ids if eid not in vectors]
        if missing:
            raise ValueError(f"no embedding for examples: {missing[:5]}")
        matrix = np.stack([normalize_vector(vectors[eid]) for eid in ids]) if ids else np.zeros((0, 0))
        return cls(ids, matrix, {eid: pool.by_id(eid) for eid in ids})

    @property
    def ids(self) -> tuple[str, ...]:
        return self._ids

    def example(self, example_id: str) -> Example:
        return self._examples[example_id]

    def vector(self, example_id: str) -> np.ndarray:
        return self._matrix[self._row[example_id]]

    def __len__(self) -> int:
        return len(self._ids)


def nearest(
    index: ExampleIndex,
    query: Sequence[float] | np.ndarray,
    n: int,
    *,
    exclude: Collection[str] = (),
) -> list[tuple[str, float]]:
    """Top-n examples by dot-product score, ties broken by ascending id."""
    if len(index) == 0:
        raise ValueError("index is empty")
    scores = index._matrix @ np.asarray(query, dtype=np.float64)
    ranked = sorted(
        ((eid, float(scores[i])) for i, eid in enumerate(index.ids) if eid not in exclude),
        key=lambda pair: (-pair[1], pair[0]),
    )
    return ranked[: max(0, n)]


@dataclass(frozen=True)
class ExampleSet:
    """Selected in-context examples, in selection order."""

    examples: tuple[Example, ...]
    scores: tuple[float, ...] | None = None  # objective value at each pick

    def ids(self) -> tuple[str, ...]:
        return tuple(e.id for e in self.examples)

    def __len__(self) -> int:
        return len(self.examples)

    def __iter__(self):
        return iter(self.examples)


def select_topk(
    index: ExampleIndex,
    query: Sequence[float] | np.ndarray,
    k: int,
    *,
    exclude: Collection[str] = (),
) -> ExampleSet:
    ranked = nearest(index, query, k, exclude=exclude)
    return ExampleSet(
        tuple(index.example(eid) for eid, _ in ranked),
        tuple(score for _, score in ranked),
    )


def select_diverse_mmr(
    index: ExampleIndex,
    query: Sequence[float] | np.ndarray,
    cfg: SelectionConfig,
    *,
    exclude: Collection[str] = (),
) -> ExampleSet:
    """Greedy selection balancing query relevance against mutual similarity.

    Restricted to the nearest-`window` candidates, each step adds the example
    maximizing  score(x, e) - alpha * sum(score(e, e') for selected e').
    With alpha=0 this reduces exactly to top-k selection.
    """
    window = nearest(index, query, cfg.window, exclude=exclude)
    if not window:
        return ExampleSet((), ())
    cand_ids = [eid for eid, _ in window]
    relevance = {eid: score for eid, score in window}
    vectors = {eid: index.vector(eid) for eid in cand_ids}

    selected: list[str] = []
    marginals: list[float] = []
    penalty: dict[str, float] = {eid: 0.0 for eid in cand_ids}
    remaining = set(cand_ids)
    target = min(cfg.k, len(cand_ids))
    while len(selected) < target:
        best_id, best_score = None, -math.inf
        for eid in sorted(remaining):
            score = relevance[eid] - cfg.alpha * penalty[eid]
            if score > best_score:
                best_id, best_score = eid, score
        assert best_id is not None
        selected.append(best_id)
        marginals.append(best_score)
        remaining.discard(best_id)
        chosen_vec = vectors[best_id]
        for eid in remaining:
            penalty[eid] += float(vectors[eid] @ chosen_vec)
    return ExampleSet(tuple(index.example(eid) for eid in selected), tuple(marginals))


def select_random(pool: TrainingPool, k: int, seed: int) -> ExampleSet:
    """Uniform sample of k pool examples without replacement (seeded)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    ordered = sorted(pool, key=lambda e: e.id)
    rng = random.Random(seed)
    count = min(k, len(ordered))
    return ExampleSet(tuple(rng.sample(ordered, count)), None)


def slot_combination(example: Example) -> frozenset:
    """The combination of slot names an example's delta touches."""
    return example.delta.touched_slots()


def diversity_distinct_slots(selection: ExampleSet) -> int:
    """Number of distinct slot combinations among the selected examples."""
    if not selection.examples:
        raise ValueError("selection is empty")
    return len({slot_combination(e) for e in selection.examples})


def diversity_entropy(selection: ExampleSet) -> float:
    """Entropy (bits) of the slot-combination distribution in the selection."""
    if not selection.examples:
        raise ValueError("selection is empty")
    counts = Counter(slot_combination(e) for e in selection.examples)
    total = len(selection.examples)
    return -sum((c / total) * math.log2(c / total) for c in counts.values())


def export_contrastive_pairs(
    pool: TrainingPool,
    index: ExampleIndex,
    *,
    window: int = 200,
    fraction: float = 0.05,
) -> list[dict]:
    """Mine positive/negative training pairs for the example retriever.

    For each anchor, the nearest `window` examples under the current
    embeddings are ranked by delta similarity against the anchor; the top
    `fraction` become positives and the bottom `fraction` negatives. Small
    pools shrink the window to whatever neighbors exist, and at least one
    pair of each polarity is kept per anchor.
    """
    records: list[dict] = []
    for anchor_id in index.ids:
        neighbors = nearest(index, index.vector(anchor_id), window + 1, exclude={anchor_id})
        neighbors = neighbors[:window]
        if not neighbors:
            continue
        anchor_delta = index.example(anchor_id).delta
        ranked = sorted(
            ((sim_f1(anchor_delta, index.example(oid).delta), oid) for oid, _ in neighbors),
            key=lambda pair: (-pair[0], pair[1]),
        )
        take = max(1, int(fraction * len(ranked)))
        positives = ranked[:take]
        rest = ranked[take:]
        negatives = sorted(rest, key=lambda pair: (pair[0], pair[1]))[:take]
        for _, oid in positives:
            records.append({"anchor_id": anchor_id, "other_id": oid, "label": "pos"})
        for _, oid in negatives:
            records.append({"anchor_id": anchor_id, "other_id": oid, "label": "neg"})
    return records


def write_pairs(path: str | Path, records: Sequence[Mapping]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(dict(record)) + "\n")
