"""Trainer command line: ``train`` mined pairs, ``embed`` a text corpus."""

from __future__ import annotations

import argparse
import sys

from .encoder import DEFAULT_BASE_MODEL
from .training import TrainJob, embed_corpus, train


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="icl-dst-trainer", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    tr = sub.add_parser("train", help="fine-tune the retriever encoder")
    tr.add_argument("--pairs", required=True)
    tr.add_argument("--texts", required=True)
    tr.add_argument("--out", required=True, help="model artifact directory")
    tr.add_argument("--base-model", default=DEFAULT_BASE_MODEL)
    tr.add_argument("--epochs", type=int, default=15)
    tr.add_argument("--batch-size", type=int, default=64)
    tr.add_argument("--lr", type=float, default=1e-3)
    tr.add_argument("--margin", type=float, default=0.5)
    tr.add_argument("--seed", type=int, default=0)

    em = sub.add_parser("embed", help="embed a text corpus with a trained model")
    em.add_argument("--model", required=True)
    em.add_argument("--texts", required=True)
    em.add_argument("--out", required=True, help="embeddings JSONL path")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "train":
        job = TrainJob(
            pairs_path=args.pairs,
            texts_path=args.texts,
            output_dir=args.out,
            base_model=args.base_model,
            epochs=args.epochs,
            batch_size=args.batch_size,
            learning_rate=args.lr,
            margin=args.margin,
            seed=args.seed,
        )
        result = train(job)
        if result.epoch_losses:
            print(f"final epoch loss: {result.epoch_losses[-1]:.6f}")
        print(f"model saved to {result.output_dir}")
        return 0
    path = embed_corpus(args.model, args.texts, args.out)
    print(f"embeddings written to {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
