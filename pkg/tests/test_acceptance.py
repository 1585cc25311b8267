"""Acceptance gate: every criterion at its stated tolerance.

Run with ``pytest tests/test_acceptance.py -s`` to see one line per
criterion. All randomized checks use fixed seeds.
"""

import functools
import json
import math
import random
import shutil
import time

import numpy as np
import pytest

from conftest import FIXTURES, random_delta, random_state
from icl_dst import experiment as exp
from icl_dst.corpus import EntityDatabase, load_ontology
from icl_dst.experiment import run_experiment
from icl_dst.normalize import (
    AmbiguousLink,
    aliases,
    build_canonical_map,
    fuzzy_ratio,
    normalize_prediction,
)
from icl_dst.parsing import Parsed, parse_completion
from icl_dst.prompts import canonicalize_completion
from icl_dst.retrieval import (
    SelectionConfig,
    diversity_distinct_slots,
    diversity_entropy,
    nearest,
    normalize_vector,
    select_diverse_mmr,
    select_topk,
)
from icl_dst.scoring import ClipConfig, ScoredCompletion, prior_logprob, rank_candidates
from icl_dst.gateway import MockLM
from icl_dst.state import (
    LiteralValue,
    SlotName,
    SlotRef,
    StateChange,
    apply_state_change,
    diff_states,
    sim_f1,
    substitute_coreferents,
)

from test_experiment import MISSPELLINGS, WRONG_D05_T1, fixture_config
from test_retrieval import clustered_pool, make_index


def criterion(name):
    def decorate(fn):
        @functools.wraps(fn)
        def wrapper(*args, **kwargs):
            try:
                fn(*args, **kwargs)
            except BaseException:
                print(f"[acceptance] FAIL  {name}")
                raise
            print(f"[acceptance] PASS  {name}")

        return wrapper

    return decorate


@criterion("delta algebra: 1000 random apply/diff round trips, exact")
def test_delta_algebra_round_trip():
    rng = random.Random(101)
    for _ in range(1000):
        prev = random_state(rng)
        nxt = random_state(rng)
        assert apply_state_change(prev, diff_states(prev, nxt)) == nxt


@criterion("sim_F1 fixtures: identity/disjoint/half, invariance, symmetry, exact")
def test_sim_f1_suite():
    area = SlotName("hotel", "area")
    name = SlotName("hotel", "name")
    dest = SlotName("taxi", "destination")
    d = StateChange({area: LiteralValue("east")}, frozenset({name}))
    assert sim_f1(d, d) == 1.0
    assert (
        sim_f1(
            StateChange({area: LiteralValue("east")}),
            StateChange({SlotName("train", "day"): LiteralValue("monday")}),
        )
        == 0.0
    )
    assert (
        sim_f1(
            StateChange({area: LiteralValue("east")}),
            StateChange({area: LiteralValue("west")}),
        )
        == 0.5
    )
    ref = StateChange({dest: SlotRef(name)})
    for literal in ("acorn guest house", "gonville hotel", "x"):
        assert sim_f1(ref, StateChange({dest: LiteralValue(literal)})) == 0.5
    rng = random.Random(202)
    for _ in range(1000):
        base = random_state(rng)
        a, b = random_delta(rng, base), random_delta(rng, base)
        assert sim_f1(a, b) == sim_f1(b, a)
        assert 0.0 <= sim_f1(a, b) <= 1.0


@criterion("MMR: alpha=0 == top-k on 100 pools; greedy optimal @1e-9; {a,c}; <10s")
def test_mmr_criteria():
    from test_retrieval import naive_greedy

    started = time.monotonic()
    rng = np.random.default_rng(303)
    for trial in range(100):
        size = int(rng.integers(3, 40))
        vectors = {
            f"e{i:03d}": normalize_vector(rng.normal(size=6)) for i in range(size)
        }
        _, index = make_index(vectors)
        query = normalize_vector(rng.normal(size=6))
        k = int(rng.integers(1, min(size, 10) + 1))
        topk = select_topk(index, query, k)
        zero_alpha = select_diverse_mmr(
            index, query, SelectionConfig(k=k, alpha=0.0, window=size)
        )
        assert zero_alpha.ids() == topk.ids()
        cfg = SelectionConfig(
            k=k, alpha=float(rng.uniform(0, 1)), window=int(rng.integers(k, size + 5))
        )
        chosen = select_diverse_mmr(index, query, cfg)
        ids, scores = naive_greedy(index, query, cfg)
        assert list(chosen.ids()) == ids
        for got, want in zip(chosen.scores, scores):
            assert abs(got - want) <= 1e-9

    a = np.array([1.0, 0.0, 0.0, 0.0])
    b = np.array([0.95, math.sqrt(1 - 0.95**2), 0.0, 0.0])
    c = np.array([0.0, 0.0, 1.0, 0.0])
    x2 = (0.8 - 0.95 * 0.9) / math.sqrt(1 - 0.95**2)
    x = np.array([0.9, x2, 0.5, 0.0])
    _, index = make_index({"a": a, "b": b, "c": c})
    scores = dict(nearest(index, x, 3))
    assert abs(scores["a"] - 0.9) < 1e-9
    assert abs(scores["b"] - 0.8) < 1e-9
    assert abs(scores["c"] - 0.5) < 1e-9
    chosen = select_diverse_mmr(index, x, SelectionConfig(k=2, alpha=0.5, window=3))
    assert set(chosen.ids()) == {"a", "c"}
    assert time.monotonic() - started < 10.0


@criterion("diversity: bounds, [A,A,B,C] == (3, 1.5 bits), monotone in alpha")
def test_diversity_criteria():
    from test_retrieval import TestDiversity

    helper = TestDiversity()
    rng = random.Random(404)
    for _ in range(200):
        pattern = "".join(rng.choice("ABC") for _ in range(rng.randint(1, 10)))
        sel = helper.selection(pattern)
        k = len(pattern)
        assert 1 <= diversity_distinct_slots(sel) <= k
        assert -1e-12 <= diversity_entropy(sel) <= math.log2(k) + 1e-12
    fixture = helper.selection("AABC")
    assert diversity_distinct_slots(fixture) == 3
    assert diversity_entropy(fixture) == pytest.approx(1.5, abs=1e-12)

    _, index, _ = clustered_pool()
    rng_np = np.random.default_rng(7)
    queries = []
    for q in range(10):
        center = np.zeros(16)
        center[q % 5] = 1.0
        queries.append(normalize_vector(center + rng_np.normal(scale=0.02, size=16)))
    means = []
    for alpha in (0.0, 0.2, 0.3, 0.5):
        cfg = SelectionConfig(k=10, alpha=alpha, window=len(index))
        counts = [diversity_distinct_slots(select_diverse_mmr(index, q, cfg)) for q in queries]
        means.append(sum(counts) / len(counts))
    assert all(b >= a for a, b in zip(means, means[1:])), means


@criterion("parser/renderer: 1000 random deltas round-trip; coreference string")
def test_parser_round_trip(schema):
    rng = random.Random(505)
    for _ in range(1000):
        base = random_state(rng)
        delta = random_delta(rng, base)
        outcome = parse_completion(canonicalize_completion(delta), schema)
        assert isinstance(outcome, Parsed)
        assert outcome.delta == delta
    outcome = parse_completion(
        "state.restaurant = find_restaurant(area=state.hotel.area)", schema
    )
    assert isinstance(outcome, Parsed)
    assert outcome.delta.updates == {
        SlotName("restaurant", "area"): SlotRef(SlotName("hotel", "area"))
    }


@criterion("PMI: beta=0 == likelihood on 100 sets; fixtures @1e-9; floors")
def test_pmi_criteria():
    rng = random.Random(606)
    clip0 = ClipConfig(beta=0.0)
    for _ in range(100):
        candidates = []
        for i in range(rng.randint(2, 6)):
            candidates.append(
                ScoredCompletion(
                    raw_text=f"c{i}",
                    parsed=None,
                    canonical_text=f"c{i}",
                    cond_logprob=rng.uniform(-12, 0),
                    prior_logprob=rng.uniform(-20, 0),
                )
            )
        ranked = rank_candidates(candidates, clip0)
        by_likelihood = sorted(
            candidates, key=lambda c: (-c.cond_logprob, c.rejected, c.canonical_text)
        )
        assert [c.canonical_text for c in ranked] == [
            c.canonical_text for c in by_likelihood
        ]

    assert math.log(0.1) - 1.0 * math.log(0.01) == pytest.approx(2.302585092994046, abs=1e-9)
    strong = math.log(0.1) - 0.4 * math.log(0.01)
    weak = math.log(0.12) - 0.4 * math.log(0.5)
    assert strong == pytest.approx(-0.460517018598809, abs=1e-9)
    assert weak == pytest.approx(-1.843004663976113, abs=1e-9)
    assert strong > weak

    make = lambda: ScoredCompletion(
        raw_text="pass", parsed=None, canonical_text="pass", cond_logprob=-1.0
    )
    clip = ClipConfig(token_floor=5e-7, sequence_floor=1e-12)
    gateway = MockLM(scores={("I", "pass"): (math.log(0.5), math.log(1e-12))})
    got = prior_logprob(make(), "I", clip, gateway)
    assert got == pytest.approx(math.log(0.5) + math.log(5e-7), abs=1e-9)
    clip = ClipConfig(token_floor=5e-7, sequence_floor=1e-7)
    gateway = MockLM(scores={("I", "pass"): (math.log(1e-4), math.log(1e-5))})
    got = prior_logprob(make(), "I", clip, gateway)
    assert got == pytest.approx(math.log(1e-7), abs=1e-12)


@criterion("normalizer: one<->1, ratio 75, ambiguity flagged, idempotent x500")
def test_normalizer_criteria(schema, cmap):
    assert "one" in aliases("1") and "1" in aliases("one")
    from icl_dst.normalize import link

    assert link(SlotName("hotel", "stars"), "one", cmap) == "1"
    assert fuzzy_ratio("abcd", "abce") == 75
    db = EntityDatabase.load(FIXTURES / "ambiguous" / "db.json")
    ontology = load_ontology(FIXTURES / "ambiguous" / "ontology.json")
    with pytest.raises(AmbiguousLink):
        build_canonical_map(schema, db, ontology)

    rng = random.Random(707)
    surfaces = [
        "east", "the east", "four", "4", "9:15", "09:15", "acorn guesthouse",
        "acorn guest house", "gonvill hotel", "indian", "no match here", "two",
    ]
    for _ in range(500):
        base = random_state(rng)
        delta = random_delta(rng, base)
        delta = StateChange(
            {
                slot: LiteralValue(rng.choice(surfaces))
                if isinstance(value, LiteralValue)
                else value
                for slot, value in delta.updates.items()
            },
            delta.removals,
        )
        once = normalize_prediction(delta, cmap)
        assert normalize_prediction(once, cmap) == once


@criterion("end-to-end mocks: gold, misspelling, single-error; <60s; no network")
def test_end_to_end_mocks(dialogues, schema, monkeypatch):
    import requests

    def no_network(*args, **kwargs):
        raise AssertionError("network use during mock end-to-end run")

    monkeypatch.setattr(requests.Session, "post", no_network)
    monkeypatch.setattr(requests.Session, "get", no_network)

    started = time.monotonic()
    cfg = fixture_config().resolved()
    golds = exp.gold_turn_states(dialogues)

    services = exp.build_services(cfg, dialogues)
    predictions = [p for d in dialogues for p in exp.run_dialogue(d, services)]
    assert exp.jga(predictions, golds) == 1.0

    services = exp.build_services(cfg, dialogues)
    services.gateway = exp.oracle_gateway(dialogues, schema, rewrites=MISSPELLINGS)
    predictions = [p for d in dialogues for p in exp.run_dialogue(d, services)]
    assert exp.jga(predictions, golds) == 1.0

    services = exp.build_services(cfg, dialogues)
    services.gateway = exp.oracle_gateway(
        dialogues, schema, overrides={("d05", 1): WRONG_D05_T1}
    )
    predictions = [p for d in dialogues for p in exp.run_dialogue(d, services)]
    # Hand propagation: d05's stray hotel-type survives turns 2 and 3, so
    # exactly its three turns are wrong: 13/16.
    assert exp.jga(predictions, golds) == 13 / 16
    assert time.monotonic() - started < 60.0


@criterion("determinism: warm replay cache reproduces metrics JSON bytes")
def test_replay_cache_determinism(tmp_path, monkeypatch):
    cache = tmp_path / "cache.jsonl"
    cfg = fixture_config(tmp_path, cache_path=str(cache))
    out = tmp_path / "out"
    tracked = [
        out / "metrics.json",
        out / "seed-0" / "metrics.json",
        out / "seed-0" / "predictions.jsonl",
        out / "seed-0" / "scores.jsonl",
    ]
    run_experiment(cfg)
    first = [p.read_bytes() for p in tracked]
    shutil.rmtree(out)

    class DeadGateway:
        def sample(self, *args, **kwargs):
            raise AssertionError("live gateway used during replay")

        def score_continuation(self, *args, **kwargs):
            raise AssertionError("live gateway used during replay")

    monkeypatch.setattr(exp, "oracle_gateway", lambda *a, **k: DeadGateway())
    run_experiment(cfg)
    second = [p.read_bytes() for p in tracked]
    assert first == second
