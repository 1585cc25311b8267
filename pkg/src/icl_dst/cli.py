"""Command-line entry points.

Verbs:
  run               run an experiment from a JSON config (flags override)
  eval              score an existing predictions file
  audit-normalizer  write the surface-to-canonical link audit
  export-pairs      mine contrastive retriever-training pairs (+ texts)
  diversity-report  selection-diversity statistics over a pool
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .corpus import (
    EntityDatabase,
    load_dialogues,
    load_ontology,
    load_schema,
    sample_few_shot,
)
from .embedder import HashingEmbedder
from .experiment import (
    ExperimentConfig,
    TurnPrediction,
    diversity_report,
    gold_turn_states,
    jga,
    leave_one_out_jga,
    run_experiment,
)
from .normalize import audit_links, build_canonical_map
from .retrieval import (
    ExampleIndex,
    SelectionConfig,
    encode_context_text,
    export_contrastive_pairs,
    load_embeddings,
    write_pairs,
)


def _print_json(payload) -> None:
    print(json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False))


def _load_config(args: argparse.Namespace) -> ExperimentConfig:
    cfg = ExperimentConfig.from_json(args.config) if args.config else ExperimentConfig()
    overrides = {}
    for name in ("mode", "fraction", "retrieval", "alpha", "k", "beta", "output_dir"):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    if getattr(args, "seed", None):
        seeds = tuple(args.seed)
        overrides["seed"] = seeds[0]
        overrides["seeds"] = seeds
    if overrides:
        cfg = dataclasses.replace(cfg, **overrides)
    return cfg


def _cmd_run(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    if args.dry_run:
        resolved = cfg.resolved()
        dialogues = load_dialogues(resolved.dialogues_path)
        plan = {
            "config": resolved.to_jsonable(),
            "dialogues": len(dialogues),
            "turns": sum(len(d.turns) for d in dialogues),
        }
        if resolved.mode != "zero":
            schema = load_schema(resolved.schema_path)
            pool = sample_few_shot(dialogues, resolved.fraction, resolved.seed, schema)
            plan["pool_examples"] = len(pool)
        _print_json(plan)
        return 0
    output = run_experiment(cfg)
    _print_json(output.metrics)
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    dialogues = load_dialogues(args.dialogues)
    schema = load_schema(args.schema)
    golds = gold_turn_states(dialogues)
    predictions = []
    with open(args.predictions, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                predictions.append(TurnPrediction.from_jsonable(json.loads(line)))
    metrics = {
        "turns": len(predictions),
        "jga": jga(predictions, golds),
        "per_domain_jga": {
            domain: leave_one_out_jga(predictions, golds, domain)
            for domain in schema.domain_names()
        },
    }
    if args.out:
        Path(args.out).write_text(
            json.dumps(metrics, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
            encoding="utf-8",
        )
    _print_json(metrics)
    return 0


def _cmd_audit_normalizer(args: argparse.Namespace) -> int:
    schema = load_schema(args.schema)
    db = EntityDatabase.load(args.database)
    ontology = load_ontology(args.ontology)
    cmap = build_canonical_map(schema, db, ontology, verify=False)
    report = audit_links(cmap, ontology)
    report.write(args.out)
    print(f"{len(report.links)} links, {len(report.ambiguities)} ambiguities -> {args.out}")
    return 1 if report.ambiguities else 0


def _build_pool_index(args: argparse.Namespace):
    schema = load_schema(args.schema)
    dialogues = load_dialogues(args.dialogues)
    pool = sample_few_shot(dialogues, args.fraction, args.seed, schema)
    if args.embeddings:
        vectors = load_embeddings(args.embeddings)
    else:
        hasher = HashingEmbedder(dim=args.dim)
        vectors = {e.id: hasher.embed(encode_context_text(e.context)) for e in pool}
    return pool, ExampleIndex.build(pool, vectors)


def _cmd_export_pairs(args: argparse.Namespace) -> int:
    pool, index = _build_pool_index(args)
    records = export_contrastive_pairs(pool, index, window=args.window, fraction=args.pct / 100.0)
    write_pairs(args.out_pairs, records)
    if args.out_texts:
        with open(args.out_texts, "w", encoding="utf-8") as fh:
            for example in sorted(pool, key=lambda e: e.id):
                record = {"id": example.id, "text": encode_context_text(example.context)}
                fh.write(json.dumps(record, ensure_ascii=False) + "\n")
    print(f"{len(records)} pairs from {len(pool)} examples -> {args.out_pairs}")
    return 0


def _cmd_diversity_report(args: argparse.Namespace) -> int:
    pool, index = _build_pool_index(args)
    selection = SelectionConfig(k=args.k, alpha=args.alpha, window=max(args.window, args.k))
    report = diversity_report(index, pool, selection, args.retrieval, seed=args.seed)
    if args.out:
        Path(args.out).write_text(
            json.dumps(report, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
            encoding="utf-8",
        )
    _print_json(report)
    return 0


def _add_pool_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--schema", required=True)
    parser.add_argument("--dialogues", required=True)
    parser.add_argument("--embeddings", default=None, help="embeddings JSONL; hashed features when omitted")
    parser.add_argument("--fraction", type=float, default=1.0)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--dim", type=int, default=64, help="hashed-feature dimension")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="icl-dst", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment")
    run.add_argument("--config", default=None, help="JSON config path")
    run.add_argument("--mode", choices=("zero", "few", "full"), default=None)
    run.add_argument("--fraction", type=float, default=None)
    run.add_argument("--seed", type=int, action="append", default=None, help="repeatable")
    run.add_argument("--retrieval", choices=("topk", "diverse", "random"), default=None)
    run.add_argument("--alpha", type=float, default=None)
    run.add_argument("--k", type=int, default=None)
    run.add_argument("--beta", type=float, default=None)
    run.add_argument("--output-dir", dest="output_dir", default=None)
    run.add_argument("--dry-run", action="store_true")
    run.set_defaults(func=_cmd_run)

    ev = sub.add_parser("eval", help="score an existing predictions file")
    ev.add_argument("--predictions", required=True)
    ev.add_argument("--dialogues", required=True)
    ev.add_argument("--schema", required=True)
    ev.add_argument("--out", default=None)
    ev.set_defaults(func=_cmd_eval)

    audit = sub.add_parser("audit-normalizer", help="write the link audit report")
    audit.add_argument("--schema", required=True)
    audit.add_argument("--database", required=True)
    audit.add_argument("--ontology", required=True)
    audit.add_argument("--out", required=True)
    audit.set_defaults(func=_cmd_audit_normalizer)

    pairs = sub.add_parser("export-pairs", help="mine contrastive training pairs")
    _add_pool_args(pairs)
    pairs.add_argument("--out-pairs", required=True)
    pairs.add_argument("--out-texts", default=None)
    pairs.add_argument("--window", type=int, default=200)
    pairs.add_argument("--pct", type=float, default=5.0, help="positive/negative percentile")
    pairs.set_defaults(func=_cmd_export_pairs)

    div = sub.add_parser("diversity-report", help="selection diversity statistics")
    _add_pool_args(div)
    div.add_argument("--k", type=int, default=10)
    div.add_argument("--alpha", type=float, default=0.2)
    div.add_argument("--window", type=int, default=100)
    div.add_argument("--retrieval", choices=("topk", "diverse", "random"), default="diverse")
    div.add_argument("--out", default=None)
    div.set_defaults(func=_cmd_diversity_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
