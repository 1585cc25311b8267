#!/usr/bin/env python3
"""Run the full pipeline offline on the fixture corpus with the oracle mock.

Writes reports under out/mock-run/ and prints the aggregate metrics. A second
invocation replays from the recorded request cache without touching any
gateway. Usage: python scripts/run_mock_experiment.py [output_dir]
"""

from __future__ import annotations

import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))

from icl_dst.experiment import ExperimentConfig, run_experiment

FIXTURES = ROOT / "tests" / "fixtures"


def main() -> None:
    output_dir = Path(sys.argv[1]) if len(sys.argv) > 1 else ROOT / "out" / "mock-run"
    output_dir.mkdir(parents=True, exist_ok=True)
    cfg = ExperimentConfig(
        mode="few",
        fraction=1.0,
        seed=0,
        k=3,
        retrieval="diverse",
        gateway="oracle",
        query_embedder="hash",
        schema_path=str(FIXTURES / "schema.json"),
        dialogues_path=str(FIXTURES / "dialogues.jsonl"),
        ontology_path=str(FIXTURES / "ontology.json"),
        database_path=str(FIXTURES / "db"),
        embeddings_path=str(FIXTURES / "embeddings.jsonl"),
        cache_path=str(output_dir / "cache.jsonl"),
        output_dir=str(output_dir),
    )
    output = run_experiment(cfg)
    print(f"JGA: {output.metrics['mean_jga']:.4f}")
    for name, path in output.paths.items():
        print(f"  {name}: {path}")


if __name__ == "__main__":
    main()
