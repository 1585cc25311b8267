"""Candidate building, floored priors, and prior-reweighted ranking."""

import math
import random

import pytest

from icl_dst.gateway import MockLM, SampledCompletion
from icl_dst.scoring import (
    ClipConfig,
    ScoredCompletion,
    build_candidates,
    pmi_beta_rank,
    prior_logprob,
    rank_candidates,
    score_candidates,
)
from icl_dst.state import LiteralValue, SlotName, StateChange

AREA = SlotName("hotel", "area")


def sample_of(text: str, total: float) -> SampledCompletion:
    return SampledCompletion.from_tokens(text, [total])


class TestClipConfig:
    def test_defaults(self):
        clip = ClipConfig()
        assert (clip.token_floor, clip.sequence_floor, clip.beta) == (5e-7, 1e-7, 0.4)

    def test_zero_shot_floors(self):
        clip = ClipConfig.zero_shot()
        assert (clip.token_floor, clip.sequence_floor) == (5e-4, 1e-5)

    def test_validation(self):
        with pytest.raises(ValueError):
            ClipConfig(token_floor=0.0)
        with pytest.raises(ValueError):
            ClipConfig(beta=1.5)


class TestBuildCandidates:
    def test_dedup_by_canonical_form(self, schema):
        samples = [
            sample_of("state.hotel = update_hotel(area='east')", -1.0),
            sample_of('state.hotel = update_hotel( area = "east" )', -2.0),
            sample_of("state.hotel = update_hotel(area='west')", -3.0),
            sample_of("pass", -4.0),
        ] + [sample_of("pass", -5.0)] * 6
        candidates = build_candidates(samples, schema)
        assert len(candidates) == 3

    def test_all_identical_collapse_to_one(self, schema):
        samples = [sample_of("pass", -float(i)) for i in range(1, 11)]
        candidates = build_candidates(samples, schema)
        assert len(candidates) == 1
        assert candidates[0].cond_logprob == -1.0  # max over duplicates

    def test_seven_distinct_keep_top_five(self, schema):
        areas = ["centre", "east", "north", "south", "west"]
        samples = [
            sample_of(f"state.hotel = update_hotel(area='{a}')", -1.0 - i)
            for i, a in enumerate(areas)
        ]
        samples += [
            sample_of("state.hotel = update_hotel(stars=3)", -10.0),
            sample_of("state.hotel = update_hotel(stars=4)", -11.0),
        ]
        candidates = build_candidates(samples, schema)
        assert len(candidates) == 5
        kept = {c.canonical_text for c in candidates}
        assert 'state.hotel = update_hotel(stars="3")' not in kept

    def test_tie_breaks_on_canonical_text(self, schema):
        samples = [
            sample_of("state.hotel = update_hotel(area='west')", -1.0),
            sample_of("state.hotel = update_hotel(area='east')", -1.0),
        ]
        candidates = build_candidates(samples, schema)
        assert candidates[0].canonical_text.endswith('(area="east")')

    def test_rejected_becomes_pass_with_demerit(self, schema):
        candidates = build_candidates([sample_of("garbage !!", -1.0)], schema)
        assert len(candidates) == 1
        assert candidates[0].canonical_text == "pass"
        assert candidates[0].rejected
        assert candidates[0].delta.is_empty()

    def test_real_pass_clears_demerit(self, schema):
        samples = [sample_of("garbage !!", -1.0), sample_of("pass", -2.0)]
        candidates = build_candidates(samples, schema)
        assert len(candidates) == 1
        assert not candidates[0].rejected


class TestPriorLogprob:
    def make_candidate(self):
        return ScoredCompletion(
            raw_text="pass", parsed=None, canonical_text="pass", cond_logprob=-1.0
        )

    def prior_with_scores(self, scores, clip):
        gateway = MockLM(scores={("INV", "pass"): scores})
        return prior_logprob(self.make_candidate(), "INV", clip, gateway)

    def test_plain_sum_when_above_floors(self):
        clip = ClipConfig()
        got = self.prior_with_scores([math.log(0.5), math.log(0.25)], clip)
        assert got == pytest.approx(math.log(0.125), abs=1e-12)

    def test_token_floor_applies(self):
        clip = ClipConfig(token_floor=5e-7, sequence_floor=1e-12)
        got = self.prior_with_scores([math.log(0.5), math.log(1e-12)], clip)
        assert got == pytest.approx(math.log(0.5) + math.log(5e-7), abs=1e-9)

    def test_sequence_floor_applies(self):
        clip = ClipConfig(token_floor=5e-7, sequence_floor=1e-7)
        got = self.prior_with_scores([math.log(1e-4), math.log(1e-5)], clip)
        assert got == pytest.approx(math.log(1e-7), abs=1e-12)


def candidate(canonical, cond, prior=None, rejected=False, delta=None):
    from icl_dst.parsing import Parsed

    parsed = Parsed(delta) if delta is not None else Parsed(StateChange())
    return ScoredCompletion(
        raw_text=canonical,
        parsed=parsed,
        canonical_text=canonical,
        cond_logprob=cond,
        prior_logprob=prior,
        rejected=rejected,
    )


class TestRanking:
    def test_pmi_score_arithmetic_beta_one(self):
        clip = ClipConfig(beta=1.0)
        a = candidate("a", math.log(0.1), math.log(0.01))
        ranked = rank_candidates([a], clip)
        score = ranked[0].cond_logprob - clip.beta * ranked[0].prior_logprob
        assert score == pytest.approx(math.log(10), abs=1e-9)
        assert score == pytest.approx(2.302585093, abs=1e-9)

    def test_pmi_score_arithmetic_beta_04(self):
        clip = ClipConfig(beta=0.4)
        strong = candidate(
            "a",
            math.log(0.1),
            math.log(0.01),
            delta=StateChange({AREA: LiteralValue("east")}),
        )
        weak = candidate("b", math.log(0.12), math.log(0.5))
        score_strong = strong.cond_logprob - 0.4 * strong.prior_logprob
        score_weak = weak.cond_logprob - 0.4 * weak.prior_logprob
        # log 0.1 - 0.4*log 0.01 and log 0.12 - 0.4*log 0.5, by hand.
        assert score_strong == pytest.approx(-0.460517018598809, abs=1e-9)
        assert score_weak == pytest.approx(-1.843004663976113, abs=1e-9)
        chosen = pmi_beta_rank([weak, strong], clip)
        assert chosen == StateChange({AREA: LiteralValue("east")})

    def test_beta_zero_equals_likelihood_ranking(self):
        rng = random.Random(17)
        clip = ClipConfig(beta=0.0)
        for _ in range(30):
            candidates = [
                candidate(f"c{i}", rng.uniform(-10, 0), rng.uniform(-20, 0))
                for i in range(rng.randint(2, 6))
            ]
            ranked = rank_candidates(candidates, clip)
            by_likelihood = sorted(
                candidates, key=lambda c: (-c.cond_logprob, c.rejected, c.canonical_text)
            )
            assert [c.canonical_text for c in ranked] == [
                c.canonical_text for c in by_likelihood
            ]

    def test_tie_breaks_higher_cond_then_text(self):
        clip = ClipConfig(beta=1.0)
        # Same pmi score: cond - prior == -1 for both; higher cond wins.
        a = candidate("aaa", -1.0, 0.0)
        b = candidate("bbb", -3.0, -2.0)
        assert rank_candidates([b, a], clip)[0].canonical_text == "aaa"
        # Full tie: ascending canonical text.
        c = candidate("ccc", -1.0, 0.0)
        assert rank_candidates([c, a], clip)[0].canonical_text == "aaa"

    def test_rejected_loses_ties(self):
        clip = ClipConfig(beta=1.0)
        good = candidate("zzz", -1.0, 0.0)
        bad = candidate("aaa", -1.0, 0.0, rejected=True)
        assert rank_candidates([bad, good], clip)[0].canonical_text == "zzz"

    def test_log_space_identity(self, schema):
        clip = ClipConfig(beta=0.4)
        gateway = MockLM(seed=1)
        samples = [sample_of("state.hotel = update_hotel(area='east')", -1.5)]
        candidates = build_candidates(samples, schema)
        scored = score_candidates(candidates, "INVERTED\n\n", clip, gateway)[0]
        lhs = math.exp(scored.pmi_score)
        rhs = math.exp(scored.cond_logprob) / math.exp(scored.prior_logprob) ** clip.beta
        assert lhs == pytest.approx(rhs, rel=1e-9)

    def test_inverted_prefix_scoring_covers_only_the_completion(self, schema, pool):
        from icl_dst.prompts import build_prompt_bundle, canonicalize_completion
        from icl_dst.state import DialogueState, TurnContext

        bundle = build_prompt_bundle(
            schema, [pool.by_id("d02:1")], TurnContext(DialogueState(), "", "hi")
        )
        gateway = MockLM(seed=3)
        canonical = canonicalize_completion(pool.by_id("d01:1").delta)
        scores = gateway.score_continuation(bundle.inverted_prefix, canonical)
        # One mock token per character of the bare completion, none for the prefix.
        assert len(scores) == len(canonical)
        # Chain rule: scoring the completion in two halves gives the same tokens.
        mid = len(canonical) // 2
        split = gateway.score_continuation(
            bundle.inverted_prefix, canonical[:mid]
        ) + gateway.score_continuation(bundle.inverted_prefix + canonical[:mid], canonical[mid:])
        assert scores == pytest.approx(split, abs=1e-12)

    def test_prior_never_below_sequence_floor(self, schema):
        clip = ClipConfig()
        gateway = MockLM(seed=8)
        samples = [sample_of("pass", -0.5)]
        candidates = build_candidates(samples, schema)
        scored = score_candidates(candidates, "PREFIX\n\n", clip, gateway)[0]
        assert scored.prior_logprob >= math.log(clip.sequence_floor)

    def test_unscored_candidate_rejected_by_rank(self):
        with pytest.raises(ValueError):
            rank_candidates([candidate("x", -1.0, prior=None)], ClipConfig())

    def test_score_monotone_in_cond_for_fixed_prior(self):
        clip = ClipConfig(beta=0.4)
        rng = random.Random(9)
        for _ in range(50):
            prior = rng.uniform(-15, 0)
            lo, hi = sorted((rng.uniform(-10, 0), rng.uniform(-10, 0)))
            weaker = candidate("a", lo, prior)
            stronger = candidate("b", hi, prior)
            ranked = rank_candidates([weaker, stronger], clip)
            score = lambda c: c.cond_logprob - clip.beta * c.prior_logprob
            assert score(stronger) >= score(weaker)
            assert ranked[0].cond_logprob == hi
