"""Candidate construction and prior-reweighted completion scoring.

Sampled completions are deduplicated by canonical form, each surviving
candidate's a-priori likelihood is estimated against the inverted prompt,
and the final score is

    score = cond_logprob - beta * prior_logprob

i.e. log of P(y | main prompt) / P(y | inverted prompt)^beta. Token and
whole-sequence probabilities are floored before use since prior estimates
for rare values can be vanishingly small.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

from .corpus import CanonicalSchema
from .gateway import CompletionGateway, SampledCompletion
from .parsing import Parsed, ParseOutcome, parse_completion, strip_at_stops
from .prompts import canonicalize_completion
from .state import EMPTY_CHANGE, StateChange

MAX_CANDIDATES = 5
PMI_IDENTITY_TOL = 1e-9


@dataclass(frozen=True)
class ClipConfig:
    """Probability floors and the prior-weight exponent."""

    token_floor: float = 5e-7
    sequence_floor: float = 1e-7
    beta: float = 0.4

    def __post_init__(self) -> None:
        for name, value in (("token_floor", self.token_floor), ("sequence_floor", self.sequence_floor)):
            if not 0.0 < value < 1.0:
                raise ValueError(f"{name} must be in (0, 1)")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError("beta must be in [0, 1]")

    @classmethod
    def few_shot(cls, **overrides) -> "ClipConfig":
        return cls(**overrides)

    @classmethod
    def zero_shot(cls, **overrides) -> "ClipConfig":
        defaults = dict(token_floor=5e-4, sequence_floor=1e-5)
        defaults.update(overrides)
        return cls(**defaults)


@dataclass(frozen=True)
class ScoredCompletion:
    """A deduplicated candidate and its scoring state."""

    raw_text: str
    parsed: ParseOutcome
    canonical_text: str
    cond_logprob: float
    prior_logprob: float | None = None
    pmi_score: float | None = None
    rejected: bool = False  # no sample of this candidate parsed

    @property
    def delta(self) -> StateChange:
        return self.parsed.delta if isinstance(self.parsed, Parsed) else EMPTY_CHANGE

    def to_jsonable(self) -> dict:
        return {
            "canonical": self.canonical_text,
            "cond_logprob": self.cond_logprob,
            "prior_logprob": self.prior_logprob,
            "score": self.pmi_score,
            "rejected": self.rejected,
        }


def build_candidates(
    samples: Sequence[SampledCompletion],
    schema: CanonicalSchema,
    limit: int = MAX_CANDIDATES,
) -> list[ScoredCompletion]:
    """Deduplicate samples by canonical form and keep the most likely few.

    Unparseable samples degrade to "pass" candidates carrying a rejection
    demerit (they lose score ties) instead of being dropped, so every turn
    still yields a prediction. A candidate's conditional logprob is the max
    over its duplicate samples.
    """
    if not samples:
        raise ValueError("no samples to build candidates from")
    by_canonical: dict[str, ScoredCompletion] = {}
    for sample in samples:
        text = strip_at_stops(sample.text)
        outcome = parse_completion(text, schema)
        if isinstance(outcome, Parsed):
            canonical = canonicalize_completion(outcome.delta)
            rejected = False
        else:
            canonical = "pass"
            rejected = True
        existing = by_canonical.get(canonical)
        if existing is None:
            by_canonical[canonical] = ScoredCompletion(
                raw_text=text,
                parsed=outcome if not rejected else parse_completion("pass", schema),
                canonical_text=canonical,
                cond_logprob=sample.total_logprob,
                rejected=rejected,
            )
        else:
            merged = replace(
                existing,
                cond_logprob=max(existing.cond_logprob, sample.total_logprob),
                rejected=existing.rejected and rejected,
            )
            by_canonical[canonical] = merged
    ranked = sorted(by_canonical.values(), key=lambda c: (-c.cond_logprob, c.canonical_text))
    return ranked[:limit]


def prior_logprob(
    candidate: ScoredCompletion,
    inverted_prefix: str,
    clip: ClipConfig,
    gateway: CompletionGateway,
) -> float:
    """Floored log-likelihood of the canonical form under the inverted prompt."""
    token_logprobs = gateway.score_continuation(inverted_prefix, candidate.canonical_text)
    token_floor_log = math.log(clip.token_floor)
    total = sum(max(lp, token_floor_log) for lp in token_logprobs)
    return max(total, math.log(clip.sequence_floor))


def score_candidates(
    candidates: Sequence[ScoredCompletion],
    inverted_prefix: str,
    clip: ClipConfig,
    gateway: CompletionGateway,
) -> list[ScoredCompletion]:
    """Fill in prior and final scores for every candidate."""
    out = []
    for candidate in candidates:
        prior = prior_logprob(candidate, inverted_prefix, clip, gateway)
        score = candidate.cond_logprob - clip.beta * prior
        out.append(replace(candidate, prior_logprob=prior, pmi_score=score))
    return out


def rank_candidates(
    candidates: Sequence[ScoredCompletion], clip: ClipConfig
) -> list[ScoredCompletion]:
    """Best candidate first. Ties: higher conditional likelihood wins, a
    rejection demerit loses, remaining ties break on canonical text."""
    def key(c: ScoredCompletion):
        score = c.pmi_score
        if score is None:
            if c.prior_logprob is None:
                raise ValueError(f"candidate not scored: {c.canonical_text!r}")
            score = c.cond_logprob - clip.beta * c.prior_logprob
        return (-score, c.rejected, -c.cond_logprob, c.canonical_text)

    return sorted(candidates, key=key)


def pmi_beta_rank(candidates: Sequence[ScoredCompletion], clip: ClipConfig) -> StateChange:
    """State change of the top-ranked candidate."""
    if not candidates:
        raise ValueError("no candidates to rank")
    return rank_candidates(candidates, clip)[0].delta
