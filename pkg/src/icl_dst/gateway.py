"""Access to the completion-sampling / continuation-scoring language model.

Three interchangeable gateways:

* ``MockLM``: fully deterministic stand-in. Completions come from a fixed
  table or a responder hook; continuation scoring falls back to a hash-based
  per-character model that satisfies the chain rule, so scores of
  concatenated continuations compose exactly.
* ``OpenAICompletionsClient``: talks to an OpenAI-style ``/completions``
  endpoint with bounded concurrency, exponential-backoff retries, and echo
  +offset bookkeeping for scoring continuations.
* ``CachingGateway``: wraps any gateway with a request-hash replay cache
  (JSONL), enabling byte-identical offline reruns.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Protocol, Sequence

import requests

from .parsing import STOP_SEQUENCES, strip_at_stops

LOGPROB_SUM_TOL = 1e-9


class GatewayUnavailable(RuntimeError):
    """The LM endpoint could not be reached within the retry budget."""


class MalformedResponse(RuntimeError):
    """The LM endpoint answered with something we cannot interpret."""


@dataclass(frozen=True)
class SampleParams:
    """Nucleus-sampling parameters for candidate generation."""

    top_p: float = 0.9
    best_of: int = 10
    n: int = 5
    max_tokens: int = 120
    stop: tuple[str, ...] = STOP_SEQUENCES

    def __post_init__(self) -> None:
        if not 0.0 < self.top_p <= 1.0:
            raise ValueError("top_p must be in (0, 1]")
        if self.n < 1 or self.best_of < self.n:
            raise ValueError("need 1 <= n <= best_of")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be positive")
        object.__setattr__(self, "stop", tuple(self.stop))

    @classmethod
    def few_shot(cls, **overrides) -> "SampleParams":
        return cls(**overrides)

    @classmethod
    def zero_shot(cls, **overrides) -> "SampleParams":
        defaults = dict(top_p=0.7, best_of=32, n=5)
        defaults.update(overrides)
        return cls(**defaults)


@dataclass(frozen=True)
class SampledCompletion:
    text: str
    token_logprobs: tuple[float, ...]
    total_logprob: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "token_logprobs", tuple(self.token_logprobs))
        if abs(self.total_logprob - sum(self.token_logprobs)) > LOGPROB_SUM_TOL:
            raise ValueError("total_logprob must equal the sum of token logprobs")

    @classmethod
    def from_tokens(cls, text: str, token_logprobs: Sequence[float]) -> "SampledCompletion":
        logprobs = tuple(float(x) for x in token_logprobs)
        return cls(text, logprobs, sum(logprobs))


class CompletionGateway(Protocol):
    def sample(self, prompt: str, params: SampleParams) -> list[SampledCompletion]:
        ...

    def score_continuation(self, prefix: str, continuation: str) -> list[float]:
        ...


class MockLM:
    """Deterministic mock gateway.

    ``completions`` maps an exact prompt to a list of completions (plain
    strings are scored by the built-in character model; pairs carry explicit
    token logprobs). ``responder`` is consulted instead when given and must
    be a pure function of (prompt, params). Continuation scores come from
    ``scores`` when the (prefix, continuation) pair is present, otherwise
    from the character model, whose per-character logprob depends only on
    seed and preceding text, so scores compose per the chain rule.
    """

    # Character-model probability band; kept well above typical clip floors.
    _P_LOW = 0.05
    _P_HIGH = 0.95
    _CONTEXT_WINDOW = 32

    def __init__(
        self,
        completions: Mapping[str, Sequence] | None = None,
        responder: Callable[[str, SampleParams], Sequence] | None = None,
        scores: Mapping[tuple[str, str], Sequence[float]] | None = None,
        seed: int = 0,
    ):
        self._completions = dict(completions or {})
        self._responder = responder
        self._scores = {k: tuple(v) for k, v in (scores or {}).items()}
        self._seed = seed

    def _char_logprob(self, context: str, char: str) -> float:
        payload = f"{self._seed}\x1f{context[-self._CONTEXT_WINDOW:]}\x1f{char}"
        digest = hashlib.blake2b(payload.encode("utf-8"), digest_size=8).digest()
        unit = int.from_bytes(digest, "big") / 2**64
        return math.log(self._P_LOW + unit * (self._P_HIGH - self._P_LOW))

    def _score_chars(self, prefix: str, continuation: str) -> list[float]:
        return [
            self._char_logprob(prefix + continuation[:i], c)
            for i, c in enumerate(continuation)
        ]

    def sample(self, prompt: str, params: SampleParams) -> list[SampledCompletion]:
        if self._responder is not None:
            raw = self._responder(prompt, params)
        else:
            raw = self._completions.get(prompt, ["pass"])
        out = []
        for entry in list(raw)[: params.n]:
            if isinstance(entry, str):
                text, logprobs = entry, None
            else:
                text, logprobs = entry[0], tuple(float(x) for x in entry[1])
            truncated = strip_at_stops(text, params.stop)
            if logprobs is None or truncated != text:
                completion = SampledCompletion.from_tokens(
                    truncated, self._score_chars(prompt, truncated)
                )
            else:
                completion = SampledCompletion.from_tokens(text, logprobs)
            out.append(completion)
        return out

    def score_continuation(self, prefix: str, continuation: str) -> list[float]:
        if not continuation:
            raise ValueError("continuation must be non-empty")
        explicit = self._scores.get((prefix, continuation))
        if explicit is not None:
            return list(explicit)
        return self._score_chars(prefix, continuation)


@dataclass(frozen=True)
class RetryPolicy:
    attempts: int = 4
    backoff: float = 0.5
    max_backoff: float = 8.0


_RETRYABLE_STATUSES = {429, 500, 502, 503, 504}


class OpenAICompletionsClient:
    """Client for an OpenAI-compatible ``/completions`` endpoint."""

    def __init__(
        self,
        endpoint: str,
        model: str,
        api_key: str | None = None,
        api_key_env: str = "LM_GATEWAY_API_KEY",
        session: requests.Session | None = None,
        retry: RetryPolicy = RetryPolicy(),
        max_inflight: int = 4,
        timeout: float = 120.0,
    ):
        self.endpoint = endpoint
        self.model = model
        self._api_key = api_key if api_key is not None else os.environ.get(api_key_env)
        self._session = session or requests.Session()
        self._retry = retry
        self._timeout = timeout
        self._inflight = threading.BoundedSemaphore(max_inflight)

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self._api_key:
            headers["Authorization"] = f"Bearer {self._api_key}"
        return headers

    def _post(self, body: dict) -> dict:
        delay = self._retry.backoff
        last_error: Exception | None = None
        for attempt in range(self._retry.attempts):
            if attempt:
                time.sleep(min(delay, self._retry.max_backoff))
                delay *= 2
            try:
                with self._inflight:
                    response = self._session.post(
                        self.endpoint, json=body, headers=self._headers(), timeout=self._timeout
                    )
            except requests.RequestException as exc:
                last_error = exc
                continue
            if response.status_code in _RETRYABLE_STATUSES:
                last_error = MalformedResponse(f"status {response.status_code}")
                continue
            if response.status_code != 200:
                raise MalformedResponse(f"status {response.status_code}: {response.text[:200]}")
            try:
                return response.json()
            except ValueError as exc:
                raise MalformedResponse(f"invalid JSON from gateway: {exc}") from exc
        raise GatewayUnavailable(f"gave up after {self._retry.attempts} attempts: {last_error}")

    def sample(self, prompt: str, params: SampleParams) -> list[SampledCompletion]:
        body = {
            "model": self.model,
            "prompt": prompt,
            "max_tokens": params.max_tokens,
            "stop": list(params.stop),
            "top_p": params.top_p,
            "best_of": params.best_of,
            "n": params.n,
            "logprobs": 1,
            "echo": False,
        }
        payload = self._post(body)
        try:
            out = []
            for choice in payload["choices"]:
                logprobs = [
                    float(lp)
                    for lp in choice["logprobs"]["token_logprobs"]
                    if lp is not None
                ]
                out.append(SampledCompletion.from_tokens(choice["text"], logprobs))
            return out
        except (KeyError, TypeError) as exc:
            raise MalformedResponse(f"unexpected response shape: {exc}") from exc

    def score_continuation(self, prefix: str, continuation: str) -> list[float]:
        if not continuation:
            raise ValueError("continuation must be non-empty")
        body = {
            "model": self.model,
            "prompt": prefix + continuation,
            "max_tokens": 0,
            "echo": True,
            "logprobs": 0,
        }
        payload = self._post(body)
        try:
            choice = payload["choices"][0]
            offsets = choice["logprobs"]["text_offset"]
            token_logprobs = choice["logprobs"]["token_logprobs"]
        except (KeyError, IndexError, TypeError) as exc:
            raise MalformedResponse(f"unexpected response shape: {exc}") from exc
        boundary = len(prefix)
        out = []
        for offset, logprob in zip(offsets, token_logprobs):
            if offset >= boundary:
                if logprob is None:
                    raise MalformedResponse("missing logprob for continuation token")
                out.append(float(logprob))
        return out


def _request_hash(request: Mapping) -> str:
    canonical = json.dumps(request, sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


class CachingGateway:
    """Request-hash replay cache around a gateway.

    With ``inner=None`` the cache is the only source; a miss raises
    ``GatewayUnavailable``, which makes warm-cache runs provably offline.
    """

    def __init__(self, inner: CompletionGateway | None, path: str | Path | None = None):
        self._inner = inner
        self._path = Path(path) if path else None
        self._lock = threading.Lock()
        self._store: dict[str, dict] = {}
        if self._path and self._path.exists():
            with open(self._path, encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    try:
                        record = json.loads(line)
                    except json.JSONDecodeError:
                        # Appends are line-atomic in practice; a torn tail
                        # from an interrupted run is treated as a miss.
                        break
                    self._store[record["request_hash"]] = record["response"]

    def _lookup(self, request: dict) -> dict | None:
        with self._lock:
            return self._store.get(_request_hash(request))

    def _record(self, request: dict, response: dict) -> None:
        key = _request_hash(request)
        with self._lock:
            if key in self._store:
                return
            self._store[key] = response
            if self._path:
                record = {"request_hash": key, "request": request, "response": response}
                with open(self._path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n")

    def sample(self, prompt: str, params: SampleParams) -> list[SampledCompletion]:
        request = {
            "op": "sample",
            "prompt": prompt,
            "params": {
                "top_p": params.top_p,
                "best_of": params.best_of,
                "n": params.n,
                "max_tokens": params.max_tokens,
                "stop": list(params.stop),
            },
        }
        cached = self._lookup(request)
        if cached is not None:
            return [
                SampledCompletion.from_tokens(c["text"], c["token_logprobs"])
                for c in cached["completions"]
            ]
        if self._inner is None:
            raise GatewayUnavailable("replay cache miss and no live gateway")
        completions = self._inner.sample(prompt, params)
        self._record(
            request,
            {
                "completions": [
                    {"text": c.text, "token_logprobs": list(c.token_logprobs)}
                    for c in completions
                ]
            },
        )
        return completions

    def score_continuation(self, prefix: str, continuation: str) -> list[float]:
        request = {"op": "score", "prefix": prefix, "continuation": continuation}
        cached = self._lookup(request)
        if cached is not None:
            return list(cached["token_logprobs"])
        if self._inner is None:
            raise GatewayUnavailable("replay cache miss and no live gateway")
        logprobs = self._inner.score_continuation(prefix, continuation)
        self._record(request, {"token_logprobs": list(logprobs)})
        return logprobs
