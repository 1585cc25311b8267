"""Contrastive fine-tuning of the example retriever.

The objective is the online contrastive loss over mined pairs: squared
cosine distance for hard positives, squared hinge on (margin - distance) for
hard negatives, where "hard" means positives farther than the closest
negative and negatives closer than the farthest positive within the batch.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path

import torch

from .data import PairFormatError, load_pairs, load_texts
from .encoder import (
    DEFAULT_BASE_MODEL,
    HashProjectionEncoder,
    build_encoder,
    load_encoder,
    parse_base_model,
    save_encoder,
)


@dataclass(frozen=True)
class TrainJob:
    pairs_path: str
    texts_path: str
    output_dir: str
    base_model: str = DEFAULT_BASE_MODEL
    epochs: int = 15
    batch_size: int = 64
    learning_rate: float = 1e-3
    margin: float = 0.5
    seed: int = 0

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 2:
            raise ValueError("batch size must be >= 2")
        if not 0.0 < self.margin <= 2.0:
            raise ValueError("margin must be in (0, 2] (cosine distance range)")


@dataclass
class TrainResult:
    output_dir: Path
    epoch_losses: list[float] = field(default_factory=list)


def online_contrastive_loss(
    anchors: torch.Tensor, others: torch.Tensor, positive: torch.Tensor, margin: float
) -> torch.Tensor:
    """Loss over a batch of (anchor, other, is-positive) embedding pairs."""
    distance = 1.0 - (anchors * others).sum(dim=-1)
    pos_d = distance[positive]
    neg_d = distance[~positive]
    if pos_d.numel() and neg_d.numel():
        hard_pos = pos_d[pos_d > neg_d.min()]
        hard_neg = neg_d[neg_d < pos_d.max()]
    else:
        hard_pos, hard_neg = pos_d, neg_d
    # Empty selections sum to a differentiable zero, so the loss always
    # carries a grad graph when the inputs do.
    return hard_pos.pow(2).sum() + torch.relu(margin - hard_neg).pow(2).sum()


def _batches(count: int, batch_size: int, rng: random.Random) -> list[list[int]]:
    order = list(range(count))
    rng.shuffle(order)
    return [order[i : i + batch_size] for i in range(0, count, batch_size)]


def train(job: TrainJob) -> TrainResult:
    """Fine-tune the encoder on mined pairs; saves the artifact and a log."""
    if parse_base_model(job.base_model) is None:
        return _train_sentence_transformer(job)
    pairs = load_pairs(job.pairs_path)
    texts = load_texts(job.texts_path)
    referenced = {p.anchor_id for p in pairs} | {p.other_id for p in pairs}
    missing = sorted(referenced - set(texts))
    if missing:
        raise PairFormatError(f"pairs reference unknown text ids: {missing[:5]}")

    torch.manual_seed(job.seed)
    encoder = build_encoder(job.base_model, seed=job.seed)
    ids = sorted(texts)
    row = {eid: i for i, eid in enumerate(ids)}
    features = encoder.features([texts[eid] for eid in ids])
    anchor_rows = torch.tensor([row[p.anchor_id] for p in pairs])
    other_rows = torch.tensor([row[p.other_id] for p in pairs])
    positive = torch.tensor([p.positive for p in pairs])

    optimizer = torch.optim.Adam(encoder.parameters(), lr=job.learning_rate)
    rng = random.Random(job.seed)
    output_dir = Path(job.output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    result = TrainResult(output_dir=output_dir)
    log_path = output_dir / "training_log.jsonl"
    with open(log_path, "w", encoding="utf-8") as log:
        for epoch in range(1, job.epochs + 1):
            total = 0.0
            batch_count = 0
            for batch in _batches(len(pairs), job.batch_size, rng):
                idx = torch.tensor(batch)
                optimizer.zero_grad()
                anchors = encoder(features[anchor_rows[idx]])
                others = encoder(features[other_rows[idx]])
                loss = online_contrastive_loss(
                    anchors, others, positive[idx], job.margin
                )
                loss.backward()
                optimizer.step()
                total += float(loss.detach())
                batch_count += 1
            epoch_loss = total / max(batch_count, 1)
            result.epoch_losses.append(epoch_loss)
            log.write(
                json.dumps(
                    {
                        "epoch": epoch,
                        "loss": epoch_loss,
                        "pairs": len(pairs),
                        "lr": job.learning_rate,
                        "margin": job.margin,
                    }
                )
                + "\n"
            )
    save_encoder(
        encoder,
        output_dir,
        extra={"epochs": job.epochs, "seed": job.seed, "margin": job.margin},
    )
    return result


def _train_sentence_transformer(job: TrainJob) -> TrainResult:
    """Fine-tune a sentence-transformers checkpoint (needs that package)."""
    try:
        from sentence_transformers import InputExample, SentenceTransformer, losses
        from torch.utils.data import DataLoader
    except ImportError as exc:  # pragma: no cover - optional dependency
        raise RuntimeError(
            f"base model {job.base_model!r} needs the sentence-transformers "
            "package; use a hash:<buckets>x<dim> encoder for offline training"
        ) from exc
    pairs = load_pairs(job.pairs_path)
    texts = load_texts(job.texts_path)
    model = SentenceTransformer(job.base_model)
    examples = [
        InputExample(
            texts=[texts[p.anchor_id], texts[p.other_id]], label=1 if p.positive else 0
        )
        for p in pairs
    ]
    loader = DataLoader(examples, shuffle=True, batch_size=job.batch_size)
    loss = losses.OnlineContrastiveLoss(model, margin=job.margin)
    model.fit(
        train_objectives=[(loader, loss)], epochs=job.epochs, show_progress_bar=False
    )
    output_dir = Path(job.output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    model.save(str(output_dir))
    return TrainResult(output_dir=output_dir)


def embed_corpus(model_dir: str | Path, texts_path: str | Path, output_path: str | Path) -> Path:
    """Embed every text with a trained encoder; writes embeddings JSONL."""
    encoder = load_encoder(model_dir)
    texts = load_texts(texts_path)
    ids = sorted(texts)
    vectors = encoder.encode([texts[eid] for eid in ids])
    output_path = Path(output_path)
    with open(output_path, "w", encoding="utf-8") as fh:
        for eid, vector in zip(ids, vectors):
            record = {"id": eid, "vector": [float(x) for x in vector]}
            fh.write(json.dumps(record) + "\n")
    return output_path
