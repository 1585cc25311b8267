"""Text encoders for retriever fine-tuning.

The built-in ``hash:<buckets>x<dim>`` encoder runs fully offline: hashed
character trigram histograms through a trainable bias-free projection, with
L2-normalized outputs (cosine == dot). Any other identifier is treated as a
sentence-transformers model name and requires that package plus downloaded
weights at runtime.
"""

from __future__ import annotations

import hashlib
import json
import re
from pathlib import Path

import torch
from torch import nn

_HASH_ID = re.compile(r"^hash:(\d+)x(\d+)$")
DEFAULT_BASE_MODEL = "hash:2048x128"


def featurize(text: str, buckets: int, ngram: int = 3) -> torch.Tensor:
    """Log-scaled hashed character n-gram histogram (deterministic)."""
    padded = f"\x02{text.casefold()}\x03"
    histogram = torch.zeros(buckets, dtype=torch.float32)
    grams = (
        [padded]
        if len(padded) < ngram
        else [padded[i : i + ngram] for i in range(len(padded) - ngram + 1)]
    )
    for gram in grams:
        digest = hashlib.blake2b(gram.encode("utf-8"), digest_size=8).digest()
        histogram[int.from_bytes(digest, "big") % buckets] += 1.0
    return torch.log1p(histogram)


class HashProjectionEncoder(nn.Module):
    """Trainable projection over hashed n-gram features."""

    def __init__(self, buckets: int, dim: int, seed: int = 0):
        super().__init__()
        self.buckets = buckets
        self.dim = dim
        generator = torch.Generator().manual_seed(seed)
        weight = torch.randn(dim, buckets, generator=generator) / buckets**0.5
        self.projection = nn.Linear(buckets, dim, bias=False)
        with torch.no_grad():
            self.projection.weight.copy_(weight)

    def features(self, texts: list[str]) -> torch.Tensor:
        return torch.stack([featurize(t, self.buckets) for t in texts])

    def forward(self, features: torch.Tensor) -> torch.Tensor:
        projected = self.projection(features)
        return nn.functional.normalize(projected, dim=-1)

    def encode(self, texts: list[str]) -> torch.Tensor:
        with torch.no_grad():
            return self.forward(self.features(texts))


def parse_base_model(identifier: str) -> tuple[int, int] | None:
    """(buckets, dim) for hash identifiers, None for external model names."""
    match = _HASH_ID.match(identifier)
    if match:
        return int(match.group(1)), int(match.group(2))
    return None


def build_encoder(identifier: str, seed: int = 0) -> HashProjectionEncoder:
    parsed = parse_base_model(identifier)
    if parsed is None:
        raise ValueError(
            f"{identifier!r} is not a hash:<buckets>x<dim> encoder; external "
            "sentence-transformers models are handled by the sbert training path"
        )
    buckets, dim = parsed
    return HashProjectionEncoder(buckets, dim, seed=seed)


def save_encoder(encoder: HashProjectionEncoder, path: Path, extra: dict | None = None) -> None:
    path.mkdir(parents=True, exist_ok=True)
    config = {
        "base_model": f"hash:{encoder.buckets}x{encoder.dim}",
        "buckets": encoder.buckets,
        "dim": encoder.dim,
    }
    config.update(extra or {})
    (path / "config.json").write_text(json.dumps(config, indent=2, sort_keys=True) + "\n")
    torch.save(encoder.state_dict(), path / "weights.pt")


def load_encoder(path: str | Path) -> HashProjectionEncoder:
    path = Path(path)
    config = json.loads((path / "config.json").read_text())
    encoder = HashProjectionEncoder(config["buckets"], config["dim"])
    state = torch.load(path / "weights.pt", weights_only=True)
    weight = state.get("projection.weight")
    if weight is None or tuple(weight.shape) != (config["dim"], config["buckets"]):
        got = None if weight is None else tuple(weight.shape)
        raise ValueError(
            f"dimension mismatch: config says {(config['dim'], config['buckets'])}, "
            f"weights are {got}"
        )
    encoder.load_state_dict(state)
    encoder.eval()
    return encoder
