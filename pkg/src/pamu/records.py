"""Dialogue records and the JSONL replay format.

One JSON object per line::

    {"session_id": "s1", "turn": 1, "speaker": "user", "text": "...",
     "annotations": {"tone": {"label": "humorous", "p": 0.92}, "length": 0.18, ...},
     "qa": {"question": "...", "answer": "...", "category": "temporal",
            "memory_context": "..."},
     "true_change": ["formality"]}

Only ``session_id``, ``turn``, ``speaker`` and ``text`` are required.
Categorical annotations are either ``{"label": name, "p": prob}`` (the
remaining mass is spread evenly over the other labels) or
``{"distribution": [...]}`` in vocabulary order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping

from pamu.errors import ParseError, VocabularyMismatch
from pamu.types import (
    CATEGORICAL_DIMENSIONS,
    CONTINUOUS_DIMENSIONS,
    DIMENSIONS,
    CategoricalValue,
    CategoryVocabulary,
    ContinuousValue,
    validate_distribution,
)

SPEAKERS = ("user", "assistant")
QA_CATEGORIES = ("single_hop", "multi_hop", "temporal")


def _categorical_annotation(raw) -> Any:
    if raw is None or isinstance(raw, CategoricalValue):
        return raw
    if isinstance(raw, Mapping):
        if "distribution" in raw:
            return {"distribution": [float(x) for x in raw["distribution"]]}
        if "label" in raw:
            p = float(raw.get("p", 1.0))
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"probability {p} outside [0, 1]")
            return {"label": str(raw["label"]), "p": p}
    if isinstance(raw, (list, tuple)) and len(raw) == 2 and isinstance(raw[0], str):
        return {"label": raw[0], "p": float(raw[1])}
    raise ValueError(f"unrecognised categorical annotation {raw!r}")


@dataclass(frozen=True)
class TurnSignals:
    """Pre-annotated preference signals for one turn (all optional)."""

    tone: Any = None
    length: float | None = None
    emotion: Any = None
    density: float | None = None
    formality: float | None = None
    token_count: int | None = None
    triple_count: int | None = None

    def __post_init__(self):
        for name in CATEGORICAL_DIMENSIONS:
            object.__setattr__(self, name, _categorical_annotation(getattr(self, name)))
        for name in CONTINUOUS_DIMENSIONS:
            value = getattr(self, name)
            if value is not None:
                object.__setattr__(self, name, ContinuousValue(value).value)
        for name in ("token_count", "triple_count"):
            value = getattr(self, name)
            if value is not None and (int(value) != value or value < 0):
                raise ValueError(f"{name} must be a non-negative integer")
        if self.token_count is not None and self.triple_count is not None and self.token_count < 1:
            raise ValueError("token_count must be >= 1 when triple_count is given")

    def has(self, dimension: str) -> bool:
        return getattr(self, dimension) is not None

    @property
    def complete(self) -> bool:
        return all(self.has(d) for d in DIMENSIONS)

    def resolve(self, dimension: str, vocabulary: CategoryVocabulary | None = None):
        """Annotated value as a CategoricalValue / ContinuousValue (or None)."""
        raw = getattr(self, dimension)
        if raw is None:
            return None
        if dimension in CONTINUOUS_DIMENSIONS:
            return ContinuousValue(raw)
        if isinstance(raw, CategoricalValue):
            return raw
        if "distribution" in raw:
            value = validate_distribution(raw["distribution"])
            if vocabulary is not None and len(value) != len(vocabulary):
                raise VocabularyMismatch(
                    f"{dimension} distribution has {len(value)} entries, vocabulary has {len(vocabulary)}"
                )
            return value
        if vocabulary is None:
            raise ValueError(f"label annotation for {dimension} needs a vocabulary")
        return CategoricalValue.from_label(vocabulary, raw["label"], raw["p"])

    def to_dict(self) -> dict:
        out = {}
        for name in DIMENSIONS + ("token_count", "triple_count"):
            value = getattr(self, name)
            if value is None:
                continue
            if isinstance(value, CategoricalValue):
                value = {"distribution": list(value.distribution)}
            out[name] = value
        return out

    @classmethod
    def from_dict(cls, data: Mapping) -> "TurnSignals":
        unknown = set(data) - set(DIMENSIONS) - {"token_count", "triple_count"}
        if unknown:
            raise ValueError(f"unknown annotation fields {sorted(unknown)}")
        return cls(**data)


@dataclass(frozen=True)
class QARecord:
    question: str
    answer: str
    category: str
    memory_context: str = ""

    def __post_init__(self):
        if self.category not in QA_CATEGORIES:
            raise ValueError(f"qa category must be one of {QA_CATEGORIES}, got {self.category!r}")

    def to_dict(self) -> dict:
        out = {"question": self.question, "answer": self.answer, "category": self.category}
        if self.memory_context:
            out["memory_context"] = self.memory_context
        return out


@dataclass(frozen=True)
class DialogueRecord:
    session_id: str
    turn: int
    speaker: str
    text: str
    annotations: TurnSignals | None = None
    qa: QARecord | None = None
    true_change: tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.speaker not in SPEAKERS:
            raise ValueError(f"speaker must be one of {SPEAKERS}, got {self.speaker!r}")
        if isinstance(self.turn, bool) or not isinstance(self.turn, int) or self.turn < 1:
            raise ValueError(f"turn must be an integer >= 1, got {self.turn!r}")
        object.__setattr__(self, "true_change", tuple(self.true_change))

    @property
    def signals(self) -> TurnSignals:
        return self.annotations or TurnSignals()

    def to_dict(self) -> dict:
        out = {"session_id": self.session_id, "turn": self.turn, "speaker": self.speaker, "text": self.text}
        if self.annotations is not None:
            out["annotations"] = self.annotations.to_dict()
        if self.qa is not None:
            out["qa"] = self.qa.to_dict()
        if self.true_change:
            out["true_change"] = list(self.true_change)
        return out

    @classmethod
    def from_dict(cls, data: Mapping) -> "DialogueRecord":
        missing = [k for k in ("session_id", "turn", "speaker", "text") if k not in data]
        if missing:
            raise ValueError(f"missing fields {missing}")
        ann = data.get("annotations")
        qa = data.get("qa")
        return cls(
            session_id=str(data["session_id"]),
            turn=data["turn"],
            speaker=data["speaker"],
            text=str(data["text"]),
            annotations=TurnSignals.from_dict(ann) if ann is not None else None,
            qa=QARecord(**qa) if qa is not None else None,
            true_change=tuple(data.get("true_change", ())),
        )


def parse_lines(lines: Iterable[str]) -> list[DialogueRecord]:
    records = []
    last_turn: dict[str, int] = {}
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            record = DialogueRecord.from_dict(json.loads(line))
        except (ValueError, TypeError, KeyError) as exc:
            raise ParseError(str(exc), line=lineno) from exc
        prev = last_turn.get(record.session_id)
        if prev is not None and record.turn <= prev:
            raise ParseError(
                f"turn {record.turn} of session {record.session_id!r} does not follow turn {prev}",
                line=lineno,
            )
        last_turn[record.session_id] = record.turn
        records.append(record)
    return records


def load_jsonl(path) -> list[DialogueRecord]:
    with open(path, encoding="utf-8") as fh:
        return parse_lines(fh)


def dump_jsonl(records: Iterable[DialogueRecord], path) -> None:
    Path(path).write_text(
        "".join(json.dumps(r.to_dict(), sort_keys=True) + "\n" for r in records),
        encoding="utf-8",
    )


def group_sessions(records: Iterable[DialogueRecord]) -> dict[str, list[DialogueRecord]]:
    sessions: dict[str, list[DialogueRecord]] = {}
    for record in records:
        sessions.setdefault(record.session_id, []).append(record)
    return sessions


# LoCoMo numbers its QA categories; 3 (open-domain) and 5 (adversarial) are not used here.
LOCOMO_CATEGORIES = {1: "multi_hop", 2: "temporal", 4: "single_hop"}


def from_locomo(sample: Mapping, session_id: str | None = None) -> list[DialogueRecord]:
    """Flatten one LoCoMo-style sample into DialogueRecords.

    ``speaker_a`` turns become user turns and ``speaker_b`` turns assistant
    turns; questions are appended after the dialogue as user turns carrying a
    ``qa`` payload. Questions in unmapped categories are skipped.
    """
    conv = sample["conversation"]
    sid = session_id or str(sample.get("sample_id", "locomo"))
    speaker_a = conv.get("speaker_a")
    keys = sorted(
        (k for k in conv if k.startswith("session_") and k[len("session_"):].isdigit()),
        key=lambda k: int(k[len("session_"):]),
    )
    records = []
    turn = 0
    for key in keys:
        for utt in conv[key]:
            turn += 1
            speaker = "user" if utt.get("speaker") == speaker_a else "assistant"
            records.append(DialogueRecord(sid, turn, speaker, utt.get("text", "")))
    for qa in sample.get("qa", []):
        category = LOCOMO_CATEGORIES.get(qa.get("category"))
        if category is None or "answer" not in qa:
            continue
        turn += 1
        records.append(
            DialogueRecord(sid, turn, "user", qa["question"],
                           qa=QARecord(qa["question"], str(qa["answer"]), category))
        )
    return records
