"""Pair and text file ingestion (the cross-component contract).

Pairs:  JSONL {"anchor_id", "other_id", "label": "pos"|"neg"}
Texts:  JSONL {"id", "text"}
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path


class PairFormatError(ValueError):
    """A pair or text record is malformed; training fails fast."""


@dataclass(frozen=True)
class Pair:
    anchor_id: str
    other_id: str
    positive: bool


def load_pairs(path: str | Path) -> list[Pair]:
    pairs: list[Pair] = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise PairFormatError(f"{path}:{line_no}: bad JSON: {exc}") from exc
            try:
                anchor, other, label = record["anchor_id"], record["other_id"], record["label"]
            except (KeyError, TypeError) as exc:
                raise PairFormatError(f"{path}:{line_no}: missing field {exc}") from exc
            if label not in ("pos", "neg"):
                raise PairFormatError(f"{path}:{line_no}: bad label {label!r}")
            pairs.append(Pair(str(anchor), str(other), label == "pos"))
    if not pairs:
        raise PairFormatError(f"{path}: no training pairs")
    return pairs


def load_texts(path: str | Path) -> dict[str, str]:
    texts: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
                key, text = str(record["id"]), str(record["text"])
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise PairFormatError(f"{path}:{line_no}: bad text record: {exc}") from exc
            if key in texts:
                raise PairFormatError(f"{path}:{line_no}: duplicate id {key!r}")
            texts[key] = text
    if not texts:
        raise PairFormatError(f"{path}: no texts")
    return texts
