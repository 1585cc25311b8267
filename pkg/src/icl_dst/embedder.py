"""Sources of text embeddings for the retrieval index.

The pipeline itself never learns embeddings; they come from one of:

* an embeddings JSONL file (see ``retrieval.load_embeddings``),
* a local HTTP embedding service ({"texts": [...]} -> {"vectors": [[...]]}),
* ``HashingEmbedder``: a deterministic featurizer (hashed character
  n-grams through a fixed pseudo-random projection) used for fixtures and
  offline runs. It is stable across platforms and library versions because
  all randomness derives from blake2b digests.
"""

from __future__ import annotations

import hashlib

import numpy as np
import requests

from .retrieval import normalize_vector


class EmbeddingServiceError(RuntimeError):
    """The embedding service is unreachable or answered garbage."""


class HashingEmbedder:
    """Deterministic text-to-vector featurizer.

    Character n-grams hash into a fixed number of buckets; the bucket
    histogram is projected to `dim` dimensions with a projection matrix whose
    entries are derived from blake2b digests of (seed, row, column).
    """

    def __init__(self, dim: int = 64, buckets: int = 1024, seed: int = 13, ngram: int = 3):
        self.dim = dim
        self.buckets = buckets
        self.seed = seed
        self.ngram = ngram
        self._projection = self._build_projection()

    def _build_projection(self) -> np.ndarray:
        # One 64-byte digest yields eight float64 entries.
        blocks = -(-self.dim // 8)
        matrix = np.empty((self.buckets, blocks * 8), dtype=np.float64)
        for row in range(self.buckets):
            for block in range(blocks):
                payload = f"{self.seed}:{row}:{block}".encode("utf-8")
                digest = hashlib.blake2b(payload, digest_size=64).digest()
                for i in range(8):
                    chunk = digest[8 * i : 8 * (i + 1)]
                    unit = int.from_bytes(chunk, "big") / 2**64
                    matrix[row, block * 8 + i] = 2.0 * unit - 1.0
        return matrix[:, : self.dim]

    def _bucket(self, gram: str) -> int:
        digest = hashlib.blake2b(gram.encode("utf-8"), digest_size=8).digest()
        return int.from_bytes(digest, "big") % self.buckets

    def embed(self, text: str) -> np.ndarray:
        padded = f"\x02{text.casefold()}\x03"
        histogram = np.zeros(self.buckets, dtype=np.float64)
        if len(padded) < self.ngram:
            histogram[self._bucket(padded)] += 1.0
        else:
            for i in range(len(padded) - self.ngram + 1):
                histogram[self._bucket(padded[i : i + self.ngram])] += 1.0
        histogram = np.log1p(histogram)
        return normalize_vector(histogram @ self._projection)

    def embed_many(self, texts: list[str]) -> list[np.ndarray]:
        return [self.embed(t) for t in texts]


class EmbeddingServiceClient:
    """Minimal client for a local embedding endpoint."""

    def __init__(self, url: str, session: requests.Session | None = None, timeout: float = 60.0):
        self.url = url
        self._session = session or requests.Session()
        self._timeout = timeout

    def embed_many(self, texts: list[str]) -> list[np.ndarray]:
        try:
            response = self._session.post(self.url, json={"texts": texts}, timeout=self._timeout)
        except requests.RequestException as exc:
            raise EmbeddingServiceError(f"cannot reach embedding service: {exc}") from exc
        if response.status_code != 200:
            raise EmbeddingServiceError(f"embedding service status {response.status_code}")
        try:
            vectors = response.json()["vectors"]
            out = [normalize_vector(v) for v in vectors]
        except (ValueError, KeyError, TypeError) as exc:
            raise EmbeddingServiceError(f"bad embedding response: {exc}") from exc
        if len(out) != len(texts):
            raise EmbeddingServiceError(
                f"expected {len(texts)} vectors, got {len(out)}"
            )
        return out

    def embed(self, text: str) -> np.ndarray:
        return self.embed_many([text])[0]
