"""Experiment orchestration: inference loop, metrics, reports, checkpoints.

The per-turn loop builds each turn context from the *predicted* previous
state, never the gold one, so early mistakes propagate exactly as they would
at deployment. Dialogues may run in parallel; turns within a dialogue are
strictly sequential.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .corpus import (
    CanonicalSchema,
    EntityDatabase,
    TrainingPool,
    derive_turn_examples,
    gold_value_counts,
    load_dialogues,
    load_ontology,
    load_schema,
    sample_few_shot,
)
from .embedder import EmbeddingServiceClient, HashingEmbedder
from .gateway import (
    CachingGateway,
    CompletionGateway,
    GatewayUnavailable,
    MockLM,
    OpenAICompletionsClient,
    RetryPolicy,
    SampleParams,
)
from .normalize import CanonicalMap, build_canonical_map, normalize_prediction
from .prompts import build_prompt_bundle, canonicalize_completion, render_print_line
from .retrieval import (
    ExampleIndex,
    ExampleSet,
    SelectionConfig,
    diversity_distinct_slots,
    diversity_entropy,
    encode_context_text,
    load_embeddings,
    select_diverse_mmr,
    select_random,
    select_topk,
)
from .scoring import ClipConfig, rank_candidates, build_candidates, score_candidates
from .state import (
    Dialogue,
    DialogueState,
    LiteralValue,
    SlotRef,
    StateChange,
    TurnContext,
    UnresolvableReference,
    apply_state_change,
)


class AlignmentError(ValueError):
    """Predictions and gold states do not cover the same turns."""


MODES = ("zero", "few", "full")
RETRIEVAL_KINDS = ("topk", "diverse", "random")
GATEWAY_KINDS = ("oracle", "http", "replay")
QUERY_EMBEDDERS = ("hash", "file", "service")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a run needs; unset knobs resolve from the mode."""

    mode: str = "few"
    fraction: float = 0.05
    seed: int = 0
    seeds: tuple[int, ...] | None = None
    k: int = 10
    retrieval: str = "diverse"
    alpha: float | None = None
    window: int | None = None
    beta: float = 0.4
    top_p: float | None = None
    best_of: int | None = None
    n: int = 5
    max_tokens: int = 120
    token_floor: float | None = None
    sequence_floor: float | None = None
    gateway: str = "oracle"
    endpoint: str | None = None
    model: str | None = None
    api_key_env: str = "LM_GATEWAY_API_KEY"
    max_inflight: int = 4
    retry_attempts: int = 4
    query_embedder: str = "hash"
    service_url: str | None = None
    embedding_dim: int = 64
    schema_path: str = ""
    dialogues_path: str = ""
    train_dialogues_path: str | None = None
    ontology_path: str | None = None
    database_path: str | None = None
    embeddings_path: str | None = None
    cache_path: str | None = None
    output_dir: str | None = None
    parallel: int = 1

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.retrieval not in RETRIEVAL_KINDS:
            raise ValueError(f"retrieval must be one of {RETRIEVAL_KINDS}")
        if self.gateway not in GATEWAY_KINDS:
            raise ValueError(f"gateway must be one of {GATEWAY_KINDS}")
        if self.query_embedder not in QUERY_EMBEDDERS:
            raise ValueError(f"query_embedder must be one of {QUERY_EMBEDDERS}")
        if self.seeds is not None:
            object.__setattr__(self, "seeds", tuple(self.seeds))

    def resolved(self) -> "ExperimentConfig":
        """Fill unset knobs with the mode- and fraction-dependent defaults."""
        full = self.mode == "full"
        zero = self.mode == "zero"
        changes: dict = {}
        if self.alpha is None:
            changes["alpha"] = 0.5 if full else (0.2 if self.fraction <= 0.05 else 0.3)
        if self.window is None:
            changes["window"] = 200 if full else 100
        if self.top_p is None:
            changes["top_p"] = 0.7 if zero else 0.9
        if self.best_of is None:
            changes["best_of"] = 32 if zero else 10
        if self.token_floor is None:
            changes["token_floor"] = 5e-4 if zero else 5e-7
        if self.sequence_floor is None:
            changes["sequence_floor"] = 1e-5 if zero else 1e-7
        if full:
            changes["fraction"] = 1.0
        return dataclasses.replace(self, **changes)

    def sample_params(self) -> SampleParams:
        cfg = self.resolved()
        return SampleParams(
            top_p=cfg.top_p, best_of=cfg.best_of, n=cfg.n, max_tokens=cfg.max_tokens
        )

    def clip_config(self) -> ClipConfig:
        cfg = self.resolved()
        return ClipConfig(
            token_floor=cfg.token_floor, sequence_floor=cfg.sequence_floor, beta=cfg.beta
        )

    def to_jsonable(self) -> dict:
        data = dataclasses.asdict(self)
        data["seeds"] = list(self.seeds) if self.seeds is not None else None
        return data

    @classmethod
    def from_json(cls, path: str | Path) -> "ExperimentConfig":
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls.from_dict(raw)

    @classmethod
    def from_dict(cls, raw: Mapping) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        data = dict(raw)
        if data.get("seeds") is not None:
            data["seeds"] = tuple(int(s) for s in data["seeds"])
        return cls(**data)


@dataclass(frozen=True)
class TurnPrediction:
    dialogue_id: str
    turn_index: int
    delta: StateChange
    predicted_state: DialogueState
    gold_state: DialogueState
    candidates: tuple[dict, ...] = ()
    chosen_canonical: str = ""
    selected_ids: tuple[str, ...] = ()
    distinct_slots: int | None = None
    entropy: float | None = None

    def to_jsonable(self) -> dict:
        return {
            "dialogue_id": self.dialogue_id,
            "turn_index": self.turn_index,
            "delta": self.delta.to_jsonable(),
            "predicted_state": self.predicted_state.as_strings(),
            "gold_state": self.gold_state.as_strings(),
            "candidates": list(self.candidates),
            "chosen_canonical": self.chosen_canonical,
            "selected_ids": list(self.selected_ids),
            "distinct_slots": self.distinct_slots,
            "entropy": self.entropy,
        }

    @classmethod
    def from_jsonable(cls, data: Mapping) -> "TurnPrediction":
        return cls(
            dialogue_id=data["dialogue_id"],
            turn_index=data["turn_index"],
            delta=StateChange.from_jsonable(data["delta"]),
            predicted_state=DialogueState.from_strings(data["predicted_state"]),
            gold_state=DialogueState.from_strings(data["gold_state"]),
            candidates=tuple(data.get("candidates", ())),
            chosen_canonical=data.get("chosen_canonical", ""),
            selected_ids=tuple(data.get("selected_ids", ())),
            distinct_slots=data.get("distinct_slots"),
            entropy=data.get("entropy"),
        )


@dataclass
class Services:
    """Initialized collaborators shared by all dialogues of one run."""

    schema: CanonicalSchema
    cmap: CanonicalMap | None
    gateway: CompletionGateway
    pool: TrainingPool | None
    index: ExampleIndex | None
    query_vector: Callable[[str, str], np.ndarray] | None
    sample_params: SampleParams
    clip: ClipConfig
    selection: SelectionConfig | None
    retrieval: str
    seed: int


def _turn_seed(base_seed: int, dialogue_id: str, turn_index: int) -> int:
    payload = f"{base_seed}:{dialogue_id}:{turn_index}".encode("utf-8")
    return int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), "big")


def _select_examples(
    services: Services, context: TurnContext, turn_id: str, dialogue_id: str, turn_index: int
) -> ExampleSet:
    if services.retrieval == "random":
        assert services.pool is not None
        seed = _turn_seed(services.seed, dialogue_id, turn_index)
        return select_random(services.pool, services.selection.k, seed)
    assert services.index is not None and services.query_vector is not None
    query = services.query_vector(turn_id, encode_context_text(context))
    if services.retrieval == "topk":
        return select_topk(services.index, query, services.selection.k)
    return select_diverse_mmr(services.index, query, services.selection)


def _apply_resilient(
    state: DialogueState, delta: StateChange
) -> tuple[DialogueState, StateChange]:
    """Apply a delta, dropping references that cannot resolve.

    Sampled programs occasionally reference a slot with no value yet; the
    rest of the update still applies and the recorded delta is the trimmed
    one, preserving the carry-over invariant.
    """
    try:
        return apply_state_change(state, delta), delta
    except UnresolvableReference:
        updates = {
            slot: value
            for slot, value in delta.updates.items()
            if not (isinstance(value, SlotRef) and state.get(value.target) is None)
        }
        trimmed = StateChange(updates, delta.removals)
        return apply_state_change(state, trimmed), trimmed


def run_dialogue(dialogue: Dialogue, services: Services) -> list[TurnPrediction]:
    """Track one dialogue turn by turn, carrying the predicted state."""
    predictions: list[TurnPrediction] = []
    state = DialogueState()
    for turn_index, turn in enumerate(dialogue.turns, start=1):
        context = TurnContext(
            prev_state=state, agent_utt=turn.agent_utt, user_utt=turn.user_utt
        )
        turn_id = f"{dialogue.id}:{turn_index}"
        selection = (
            _select_examples(services, context, turn_id, dialogue.id, turn_index)
            if services.pool is not None
            else ExampleSet((), ())
        )
        bundle = build_prompt_bundle(services.schema, list(selection.examples), context)
        samples = services.gateway.sample(bundle.main_prompt, services.sample_params)
        candidates = build_candidates(samples, services.schema)
        candidates = score_candidates(
            candidates, bundle.inverted_prefix, services.clip, services.gateway
        )
        ranked = rank_candidates(candidates, services.clip)
        chosen = ranked[0]
        delta = chosen.delta
        if services.cmap is not None:
            delta = normalize_prediction(delta, services.cmap)
        state, applied = _apply_resilient(state, delta)
        distinct = diversity_distinct_slots(selection) if len(selection) else None
        entropy = diversity_entropy(selection) if len(selection) else None
        predictions.append(
            TurnPrediction(
                dialogue_id=dialogue.id,
                turn_index=turn_index,
                delta=applied,
                predicted_state=state,
                gold_state=turn.gold_state,
                candidates=tuple(c.to_jsonable() for c in ranked),
                chosen_canonical=chosen.canonical_text,
                selected_ids=selection.ids(),
                distinct_slots=distinct,
                entropy=entropy,
            )
        )
    return predictions


def _folded(state: DialogueState) -> dict:
    return {slot: value.casefold() for slot, value in state.entries.items()}


def gold_turn_states(dialogues: Sequence[Dialogue]) -> dict[tuple[str, int], DialogueState]:
    return {
        (d.id, t): turn.gold_state
        for d in dialogues
        for t, turn in enumerate(d.turns, start=1)
    }


def jga(
    predictions: Sequence[TurnPrediction],
    golds: Mapping[tuple[str, int], DialogueState],
) -> float:
    """Fraction of turns whose full predicted state matches gold exactly
    (case-folded string comparison)."""
    keys = [(p.dialogue_id, p.turn_index) for p in predictions]
    if len(set(keys)) != len(keys):
        raise AlignmentError("duplicate prediction turns")
    if set(keys) != set(golds):
        raise AlignmentError("predictions and gold states cover different turns")
    correct = sum(
        1
        for p in predictions
        if _folded(p.predicted_state) == _folded(golds[(p.dialogue_id, p.turn_index)])
    )
    return correct / len(predictions) if predictions else 0.0


def leave_one_out_jga(
    predictions: Sequence[TurnPrediction],
    golds: Mapping[tuple[str, int], DialogueState],
    domain: str,
) -> float | None:
    """JGA over dialogues containing `domain`, comparing only its slots.

    Returns None when no dialogue contains the domain.
    """
    containing = {
        did
        for (did, _), gold in golds.items()
        if any(slot.domain == domain for slot in gold.entries)
    }
    if not containing:
        return None

    def domain_part(state: DialogueState) -> dict:
        return {
            slot: value.casefold()
            for slot, value in state.entries.items()
            if slot.domain == domain
        }

    scoped = [p for p in predictions if p.dialogue_id in containing]
    correct = sum(
        1
        for p in scoped
        if domain_part(p.predicted_state)
        == domain_part(golds[(p.dialogue_id, p.turn_index)])
    )
    return correct / len(scoped) if scoped else None


# ---------------------------------------------------------------------------
# Oracle gateway: emits canonical gold update lines, keyed by the query's
# print line. Useful for offline end-to-end runs and tests.
# ---------------------------------------------------------------------------


def corrupt_delta(delta: StateChange, rewrites: Mapping[str, str]) -> StateChange:
    """Rewrite literal values through a surface-form substitution table."""
    updates = {
        slot: LiteralValue(rewrites.get(v.text, v.text)) if isinstance(v, LiteralValue) else v
        for slot, v in delta.updates.items()
    }
    return StateChange(updates, delta.removals)


def oracle_update_table(
    dialogues: Sequence[Dialogue],
    schema: CanonicalSchema,
    *,
    rewrites: Mapping[str, str] | None = None,
    overrides: Mapping[tuple[str, int], StateChange] | None = None,
) -> dict[str, str]:
    """print-line -> update-line table of gold completions.

    `rewrites` corrupts literal surface forms (for exercising the
    normalizer); `overrides` swaps in a wrong delta for specific turns.
    """
    table: dict[str, str] = {}
    for dialogue in dialogues:
        examples = derive_turn_examples(dialogue, schema)
        for turn_index, (example, turn) in enumerate(zip(examples, dialogue.turns), start=1):
            delta = example.delta
            if overrides and (dialogue.id, turn_index) in overrides:
                delta = overrides[(dialogue.id, turn_index)]
            elif rewrites:
                delta = corrupt_delta(delta, rewrites)
            key = render_print_line(turn.agent_utt, turn.user_utt)
            completion = canonicalize_completion(delta)
            if key in table and table[key] != completion:
                raise ValueError(f"ambiguous oracle key (duplicate utterances): {key}")
            table[key] = completion
    return table


def _last_print_line(prompt: str) -> str | None:
    for line in reversed(prompt.splitlines()):
        if line.startswith("print("):
            return line
    return None


def oracle_gateway(
    dialogues: Sequence[Dialogue],
    schema: CanonicalSchema,
    *,
    rewrites: Mapping[str, str] | None = None,
    overrides: Mapping[tuple[str, int], StateChange] | None = None,
    seed: int = 0,
) -> MockLM:
    table = oracle_update_table(dialogues, schema, rewrites=rewrites, overrides=overrides)

    def responder(prompt: str, params: SampleParams):
        line = _last_print_line(prompt)
        return [table.get(line, "pass")] if line else ["pass"]

    return MockLM(responder=responder, seed=seed)


# ---------------------------------------------------------------------------
# Full experiment assembly
# ---------------------------------------------------------------------------


@dataclass
class SeedRunResult:
    seed: int
    predictions: list[TurnPrediction]
    metrics: dict


@dataclass
class ExperimentOutput:
    config: ExperimentConfig
    per_seed: list[SeedRunResult]
    metrics: dict
    paths: dict = field(default_factory=dict)


def _build_query_vector(cfg: ExperimentConfig, vectors: Mapping[str, np.ndarray] | None):
    if cfg.query_embedder == "file":
        if vectors is None:
            raise ValueError("query_embedder=file requires an embeddings file")

        def from_file(turn_id: str, text: str) -> np.ndarray:
            try:
                return vectors[turn_id]
            except KeyError as exc:
                raise KeyError(f"no embedding for query turn {turn_id}") from exc

        return from_file
    if cfg.query_embedder == "service":
        if not cfg.service_url:
            raise ValueError("query_embedder=service requires service_url")
        client = EmbeddingServiceClient(cfg.service_url)
        return lambda turn_id, text: client.embed(text)
    hasher = HashingEmbedder(dim=cfg.embedding_dim)
    return lambda turn_id, text: hasher.embed(text)


def _build_gateway(cfg: ExperimentConfig, dialogues, schema) -> CompletionGateway:
    if cfg.gateway == "oracle":
        inner: CompletionGateway = oracle_gateway(dialogues, schema, seed=cfg.seed)
    elif cfg.gateway == "http":
        if not cfg.endpoint or not cfg.model:
            raise ValueError("http gateway requires endpoint and model")
        inner = OpenAICompletionsClient(
            cfg.endpoint,
            cfg.model,
            api_key_env=cfg.api_key_env,
            retry=RetryPolicy(attempts=cfg.retry_attempts),
            max_inflight=cfg.max_inflight,
        )
    else:  # replay
        if not cfg.cache_path:
            raise ValueError("replay gateway requires cache_path")
        return CachingGateway(None, cfg.cache_path)
    if cfg.cache_path:
        return CachingGateway(inner, cfg.cache_path)
    return inner


def build_services(cfg: ExperimentConfig, dialogues: Sequence[Dialogue]) -> Services:
    """Load inputs and wire all collaborators for one seeded run."""
    cfg = cfg.resolved()
    schema = load_schema(cfg.schema_path)

    pool = None
    index = None
    query_vector = None
    vectors = None
    if cfg.mode != "zero":
        train_path = cfg.train_dialogues_path or cfg.dialogues_path
        train_dialogues = (
            dialogues if train_path == cfg.dialogues_path else load_dialogues(train_path)
        )
        pool = sample_few_shot(train_dialogues, cfg.fraction, cfg.seed, schema)
        if cfg.embeddings_path:
            vectors = load_embeddings(cfg.embeddings_path)
        else:
            hasher = HashingEmbedder(dim=cfg.embedding_dim)
            vectors = {
                e.id: hasher.embed(encode_context_text(e.context)) for e in pool
            }
        index = ExampleIndex.build(pool, vectors)
        query_vector = _build_query_vector(cfg, vectors)

    cmap = None
    if cfg.ontology_path and cfg.database_path:
        ontology = load_ontology(cfg.ontology_path)
        db = EntityDatabase.load(cfg.database_path)
        counts = gold_value_counts(pool) if pool is not None else None
        cmap = build_canonical_map(schema, db, ontology, gold_counts=counts)

    selection = None
    if cfg.mode != "zero":
        selection = SelectionConfig(k=cfg.k, alpha=cfg.alpha, window=max(cfg.window, cfg.k))

    return Services(
        schema=schema,
        cmap=cmap,
        gateway=_build_gateway(cfg, dialogues, schema),
        pool=pool,
        index=index,
        query_vector=query_vector,
        sample_params=cfg.sample_params(),
        clip=cfg.clip_config(),
        selection=selection,
        retrieval=cfg.retrieval,
        seed=cfg.seed,
    )


def _checkpoint_path(output_dir: Path, seed: int, dialogue_id: str) -> Path:
    return output_dir / f"seed-{seed}" / "checkpoints" / f"{dialogue_id}.json"


def _write_checkpoint(path: Path, predictions: list[TurnPrediction]) -> None:
    # Atomic replace so an interrupted run never leaves a torn checkpoint.
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = [p.to_jsonable() for p in predictions]
    tmp = path.with_suffix(".tmp")
    tmp.write_text(
        json.dumps(payload, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8"
    )
    os.replace(tmp, path)


def _load_checkpoint(path: Path) -> list[TurnPrediction] | None:
    if not path.exists():
        return None
    payload = json.loads(path.read_text(encoding="utf-8"))
    return [TurnPrediction.from_jsonable(p) for p in payload]


def run_seed(
    cfg: ExperimentConfig, dialogues: Sequence[Dialogue], seed: int
) -> SeedRunResult:
    """Run every dialogue for one seed, honoring existing checkpoints."""
    cfg = dataclasses.replace(cfg, seed=seed).resolved()
    services = build_services(cfg, dialogues)
    output_dir = Path(cfg.output_dir) if cfg.output_dir else None

    results: dict[str, list[TurnPrediction]] = {}
    pending: list[Dialogue] = []
    for dialogue in dialogues:
        checkpoint = (
            _load_checkpoint(_checkpoint_path(output_dir, seed, dialogue.id))
            if output_dir
            else None
        )
        if checkpoint is not None:
            results[dialogue.id] = checkpoint
        else:
            pending.append(dialogue)

    def worker(dialogue: Dialogue) -> tuple[str, list[TurnPrediction]]:
        predictions = run_dialogue(dialogue, services)
        if output_dir:
            _write_checkpoint(_checkpoint_path(output_dir, seed, dialogue.id), predictions)
        return dialogue.id, predictions

    failure: Exception | None = None
    if cfg.parallel > 1 and len(pending) > 1:
        with ThreadPoolExecutor(max_workers=cfg.parallel) as executor:
            futures = {executor.submit(worker, d): d for d in pending}
            for future in futures:
                try:
                    did, preds = future.result()
                    results[did] = preds
                except GatewayUnavailable as exc:
                    failure = exc
    else:
        for dialogue in pending:
            try:
                did, preds = worker(dialogue)
                results[did] = preds
            except GatewayUnavailable as exc:
                failure = exc
                break
    if failure is not None:
        raise GatewayUnavailable(
            f"run interrupted; {len(results)} dialogues checkpointed: {failure}"
        )

    predictions = [p for d in dialogues for p in results[d.id]]
    golds = gold_turn_states(dialogues)
    metrics = seed_metrics(cfg, predictions, golds)
    return SeedRunResult(seed=seed, predictions=predictions, metrics=metrics)


def seed_metrics(
    cfg: ExperimentConfig,
    predictions: Sequence[TurnPrediction],
    golds: Mapping[tuple[str, int], DialogueState],
) -> dict:
    schema = load_schema(cfg.schema_path)
    metrics: dict = {
        "seed": cfg.seed,
        "turns": len(predictions),
        "jga": jga(predictions, golds),
        "per_domain_jga": {
            domain: leave_one_out_jga(predictions, golds, domain)
            for domain in schema.domain_names()
        },
    }
    if cfg.mode != "zero" and cfg.retrieval != "random":
        distinct = [p.distinct_slots for p in predictions if p.distinct_slots is not None]
        entropy = [p.entropy for p in predictions if p.entropy is not None]
        if distinct:
            metrics["diversity"] = {
                "mean_distinct_slots": sum(distinct) / len(distinct),
                "mean_entropy": sum(entropy) / len(entropy),
            }
    return metrics


def run_experiment(cfg: ExperimentConfig) -> ExperimentOutput:
    cfg = cfg.resolved()
    dialogues = load_dialogues(cfg.dialogues_path)
    seeds = list(cfg.seeds) if cfg.seeds else [cfg.seed]
    per_seed = [run_seed(cfg, dialogues, seed) for seed in seeds]
    aggregate = {
        "config": dataclasses.replace(cfg, seeds=tuple(seeds)).to_jsonable(),
        "per_seed": {str(r.seed): r.metrics for r in per_seed},
        "mean_jga": sum(r.metrics["jga"] for r in per_seed) / len(per_seed),
    }
    output = ExperimentOutput(config=cfg, per_seed=per_seed, metrics=aggregate)
    if cfg.output_dir:
        output.paths = write_report(output, Path(cfg.output_dir))
    return output


def _dump_json(path: Path, payload) -> None:
    path.write_text(
        json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )


def write_report(output: ExperimentOutput, output_dir: Path) -> dict:
    """Write metrics JSON, per-turn predictions, and candidate score dumps."""
    output_dir.mkdir(parents=True, exist_ok=True)
    paths: dict = {}
    for result in output.per_seed:
        seed_dir = output_dir / f"seed-{result.seed}"
        seed_dir.mkdir(parents=True, exist_ok=True)
        predictions_path = seed_dir / "predictions.jsonl"
        with open(predictions_path, "w", encoding="utf-8") as fh:
            for p in result.predictions:
                record = p.to_jsonable()
                record.pop("candidates")
                fh.write(json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n")
        scores_path = seed_dir / "scores.jsonl"
        with open(scores_path, "w", encoding="utf-8") as fh:
            for p in result.predictions:
                record = {
                    "turn_id": f"{p.dialogue_id}:{p.turn_index}",
                    "candidates": list(p.candidates),
                    "chosen": p.chosen_canonical,
                }
                fh.write(json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n")
        _dump_json(seed_dir / "metrics.json", result.metrics)
        paths[f"seed-{result.seed}"] = {
            "predictions": str(predictions_path),
            "scores": str(scores_path),
            "metrics": str(seed_dir / "metrics.json"),
        }
    metrics_path = output_dir / "metrics.json"
    _dump_json(metrics_path, output.metrics)
    paths["metrics"] = str(metrics_path)
    return paths


def diversity_report(
    index: ExampleIndex,
    pool: TrainingPool,
    selection: SelectionConfig,
    retrieval: str,
    seed: int = 0,
) -> dict:
    """Mean selection-diversity statistics over the pool (self excluded)."""
    distinct: list[int] = []
    entropy: list[float] = []
    for example in pool:
        if retrieval == "random":
            chosen = select_random(pool, selection.k, _turn_seed(seed, example.id, 0))
        else:
            query = index.vector(example.id)
            if retrieval == "topk":
                chosen = select_topk(index, query, selection.k, exclude={example.id})
            else:
                chosen = select_diverse_mmr(index, query, selection, exclude={example.id})
        if len(chosen):
            distinct.append(diversity_distinct_slots(chosen))
            entropy.append(diversity_entropy(chosen))
    return {
        "queries": len(distinct),
        "k": selection.k,
        "alpha": selection.alpha,
        "retrieval": retrieval,
        "mean_distinct_slots": sum(distinct) / len(distinct) if distinct else None,
        "mean_entropy": sum(entropy) / len(entropy) if entropy else None,
    }
