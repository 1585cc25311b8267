#!/usr/bin/env python3
"""Sweep the dissimilarity weight and print selection-diversity statistics.

Mirrors the retrieval diagnostics: mean distinct slot combinations and mean
slot-combination entropy per alpha, over the fixture pool.
Usage: python scripts/diversity_sweep.py [k]
"""

from __future__ import annotations

import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))

from icl_dst.corpus import load_dialogues, load_schema, sample_few_shot
from icl_dst.experiment import diversity_report
from icl_dst.retrieval import ExampleIndex, SelectionConfig, load_embeddings

FIXTURES = ROOT / "tests" / "fixtures"


def main() -> None:
    k = int(sys.argv[1]) if len(sys.argv) > 1 else 5
    schema = load_schema(FIXTURES / "schema.json")
    dialogues = load_dialogues(FIXTURES / "dialogues.jsonl")
    pool = sample_few_shot(dialogues, 1.0, 0, schema)
    index = ExampleIndex.build(pool, load_embeddings(FIXTURES / "embeddings.jsonl"))

    print(f"{'retrieval':<16}{'alpha':>6}{'distinct':>10}{'entropy':>10}")
    report = diversity_report(index, pool, SelectionConfig(k=k, alpha=0.0, window=len(pool)), "topk")
    print(f"{'top-k':<16}{'-':>6}{report['mean_distinct_slots']:>10.2f}{report['mean_entropy']:>10.2f}")
    for alpha in (0.0, 0.2, 0.3, 0.5):
        cfg = SelectionConfig(k=k, alpha=alpha, window=len(pool))
        report = diversity_report(index, pool, cfg, "diverse")
        print(f"{'diverse':<16}{alpha:>6.1f}{report['mean_distinct_slots']:>10.2f}{report['mean_entropy']:>10.2f}")
    report = diversity_report(index, pool, SelectionConfig(k=k, alpha=0.0, window=len(pool)), "random")
    print(f"{'random':<16}{'-':>6}{report['mean_distinct_slots']:>10.2f}{report['mean_entropy']:>10.2f}")


if __name__ == "__main__":
    main()
