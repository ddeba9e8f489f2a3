"""Answer-quality metrics and detection-quality statistics.

Normalisation: lowercase, strip ASCII punctuation, split on whitespace.
SQuAD-style article removal is available but off by default.
"""

from __future__ import annotations

import json
import math
import re
import string
from collections import Counter
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

from pamu.errors import EmptyReference

_PUNCT = str.maketrans("", "", string.punctuation)
_ARTICLES = re.compile(r"\b(a|an|the)\b")


def normalize_tokens(text: str, remove_articles: bool = False) -> list[str]:
    text = text.lower().translate(_PUNCT)
    if remove_articles:
        text = _ARTICLES.sub(" ", text)
    return text.split()


def _reference_tokens(reference: str, remove_articles: bool) -> list[str]:
    tokens = normalize_tokens(reference, remove_articles)
    if not tokens:
        raise EmptyReference(f"reference {reference!r} is empty after normalisation")
    return tokens


def token_f1(prediction: str, reference: str, remove_articles: bool = False) -> float:
    ref = _reference_tokens(reference, remove_articles)
    pred = normalize_tokens(prediction, remove_articles)
    overlap = sum((Counter(pred) & Counter(ref)).values())
    if overlap == 0:
        return 0.0
    precision = overlap / len(pred)
    recall = overlap / len(ref)
    return 2 * precision * recall / (precision + recall)


def bleu1(prediction: str, reference: str, brevity_penalty: bool = True,
          remove_articles: bool = False) -> float:
    """Clipped unigram precision, times exp(1 - r/c) when the prediction is shorter."""
    ref = _reference_tokens(reference, remove_articles)
    pred = normalize_tokens(prediction, remove_articles)
    if not pred:
        return 0.0
    clipped = sum((Counter(pred) & Counter(ref)).values())
    score = clipped / len(pred)
    if brevity_penalty and len(pred) < len(ref):
        score *= math.exp(1.0 - len(ref) / len(pred))
    return score


class DetectionStats(NamedTuple):
    latency: float | None
    false_positives: int
    misses: int


def detection_stats(trigger_turns: Sequence[int], true_change_turns: Sequence[int],
                    window: int) -> DetectionStats:
    """Match change-detector triggers against known change points.

    A trigger inside ``[t0, t0 + window]`` of a true change ``t0`` counts
    towards that change (the earliest such trigger sets the latency); a
    trigger that lands in no change's window is a false positive; a change
    with no trigger in its window is a miss. Latency is averaged over hits and
    is None when nothing was hit.
    """
    triggers = sorted(trigger_turns)
    changes = sorted(true_change_turns)
    latencies = []
    misses = 0
    for t0 in changes:
        hits = [t for t in triggers if t0 <= t <= t0 + window]
        if hits:
            latencies.append(hits[0] - t0)
        else:
            misses += 1
    false_positives = sum(
        1 for t in triggers if not any(t0 <= t <= t0 + window for t0 in changes)
    )
    latency = sum(latencies) / len(latencies) if latencies else None
    return DetectionStats(latency, false_positives, misses)


@dataclass
class MetricReport:
    """Aggregate QA scores plus per-question rows.

    ``f1`` and ``bleu1`` are means over ``records``; ``by_category`` holds the
    same means per question category. Detection fields stay None when the
    dataset carries no true-change markers.
    """

    records: list[dict] = field(default_factory=list)
    detection_latency: float | None = None
    false_positives: int | None = None
    misses: int | None = None
    config: dict = field(default_factory=dict)
    # per-turn traces from a replay; kept in memory only, never serialised
    traces: list = field(default_factory=list, repr=False, compare=False)

    @property
    def f1(self) -> float:
        return _mean([r["f1"] for r in self.records])

    @property
    def bleu1(self) -> float:
        return _mean([r["bleu1"] for r in self.records])

    @property
    def by_category(self) -> dict[str, dict]:
        groups: dict[str, list[dict]] = {}
        for r in self.records:
            groups.setdefault(r["category"], []).append(r)
        return {
            cat: {
                "count": len(rows),
                "f1": _mean([r["f1"] for r in rows]),
                "bleu1": _mean([r["bleu1"] for r in rows]),
            }
            for cat, rows in sorted(groups.items())
        }

    def add(self, prediction: str, reference: str, category: str, **extra) -> dict:
        row = {
            "category": category,
            "prediction": prediction,
            "reference": reference,
            "f1": token_f1(prediction, reference),
            "bleu1": bleu1(prediction, reference),
            **extra,
        }
        self.records.append(row)
        return row

    def to_dict(self) -> dict:
        return {
            "f1": self.f1,
            "bleu1": self.bleu1,
            "count": len(self.records),
            "by_category": self.by_category,
            "detection": {
                "latency": self.detection_latency,
                "false_positives": self.false_positives,
                "misses": self.misses,
            },
            "config": self.config,
            "records": self.records,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())


def _mean(values: Sequence[float]) -> float:
    return math.fsum(values) / len(values) if values else 0.0
