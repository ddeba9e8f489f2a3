"""Per-turn pipeline: extract -> track -> describe -> prompt -> generate.

`run_turn` is pure with respect to the session: it takes a SessionSnapshot
and returns a new one, so a replay can be stopped, saved and resumed at any
turn boundary.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping

from pamu.errors import ConfigError
from pamu.extraction import ExtractionConfig, Extractor, extract
from pamu.generation import Backend, GenerationLog, GenerationRequest, generate
from pamu.perception import ChangeReport, DimensionEstimate, TrackerState, default_specs, step
from pamu.prompting import PreferenceDescriptor, build_prompt, format_preference
from pamu.records import DialogueRecord
from pamu.types import (
    CATEGORICAL_DIMENSIONS,
    DIMENSIONS,
    LambdaMode,
    PerceptionConfig,
    PreferenceVector,
    Vocabularies,
)


@dataclass(frozen=True)
class AblationConfig:
    """Switches that knock out one component of the mechanism at a time."""

    disable_sw: bool = False
    disable_ema: bool = False
    equal_fusion: bool = False
    disable_detection: bool = False
    disable_prompt: bool = False
    single_pref: str | None = None
    static_pref: bool = False
    static_turns: int = 5

    def __post_init__(self):
        if self.disable_sw and self.disable_ema:
            raise ConfigError("disable_sw and disable_ema are mutually exclusive")
        if self.equal_fusion and (self.disable_sw or self.disable_ema):
            raise ConfigError("equal_fusion contradicts disable_sw/disable_ema")
        if self.single_pref is not None and self.single_pref not in DIMENSIONS:
            raise ConfigError(f"unknown dimension {self.single_pref!r}")
        if self.static_turns < 1:
            raise ConfigError("static_turns must be positive")

    def apply(self, config: PerceptionConfig) -> PerceptionConfig:
        if self.disable_sw:
            return replace(config, lam=0.0, lambda_mode=LambdaMode.FIXED)
        if self.disable_ema:
            return replace(config, lam=1.0, lambda_mode=LambdaMode.FIXED)
        if self.equal_fusion:
            return replace(config, lam=0.5, lambda_mode=LambdaMode.FIXED)
        return config

    def to_dict(self) -> dict:
        return {
            "disable_sw": self.disable_sw,
            "disable_ema": self.disable_ema,
            "equal_fusion": self.equal_fusion,
            "disable_detection": self.disable_detection,
            "disable_prompt": self.disable_prompt,
            "single_pref": self.single_pref,
            "static_pref": self.static_pref,
            "static_turns": self.static_turns,
        }


# the seven knock-out variants plus the full mechanism
ABLATIONS: dict[str, AblationConfig] = {
    "full": AblationConfig(),
    "no_sw": AblationConfig(disable_sw=True),
    "no_ema": AblationConfig(disable_ema=True),
    "equal_fusion": AblationConfig(equal_fusion=True),
    "no_detection": AblationConfig(disable_detection=True),
    "no_prompt": AblationConfig(disable_prompt=True),
    "single_pref": AblationConfig(single_pref="length"),
    "static_pref": AblationConfig(static_pref=True),
}


@dataclass(frozen=True)
class PipelineConfig:
    perception: PerceptionConfig = field(default_factory=PerceptionConfig)
    extraction: ExtractionConfig = field(default_factory=ExtractionConfig)
    ablation: AblationConfig = field(default_factory=AblationConfig)
    vocabularies: Vocabularies = field(default_factory=Vocabularies)
    # rebuild the descriptor only on turns where a shift is detected
    gate_on_detection: bool = True
    model: str = "mock"
    max_tokens: int = 256
    temperature: float = 0.0

    @property
    def effective_perception(self) -> PerceptionConfig:
        return self.ablation.apply(self.perception)

    def to_dict(self) -> dict:
        return {
            "perception": self.perception.to_dict(),
            "extraction": {
                "history_turns": self.extraction.history_turns,
                "max_tokens": self.extraction.max_tokens,
            },
            "ablation": self.ablation.to_dict(),
            "vocabularies": {
                "tone": list(self.vocabularies.tone.labels),
                "emotion": list(self.vocabularies.emotion.labels),
            },
            "gate_on_detection": self.gate_on_detection,
            "model": self.model,
            "max_tokens": self.max_tokens,
            "temperature": self.temperature,
        }


def _descriptor_from_dict(data) -> PreferenceDescriptor | None:
    return None if data is None else PreferenceDescriptor(**data)


@dataclass(frozen=True)
class SessionSnapshot:
    session_id: str
    tracker: TrackerState
    counter: int = 0
    history: tuple[DialogueRecord, ...] = ()
    descriptor: PreferenceDescriptor | None = None
    descriptor_history: tuple[tuple[int, str | None], ...] = ()
    change_events: tuple[tuple[int, tuple[str, ...]], ...] = ()
    static_observations: tuple[dict, ...] = ()

    @classmethod
    def new(cls, session_id: str, vocabularies: Vocabularies | None = None) -> "SessionSnapshot":
        return cls(session_id, TrackerState.initial(default_specs(vocabularies)))

    def to_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "counter": self.counter,
            "tracker": self.tracker.to_dict(),
            "history": [r.to_dict() for r in self.history],
            "descriptor": None if self.descriptor is None else self.descriptor.to_dict(),
            "descriptor_history": [[t, d] for t, d in self.descriptor_history],
            "change_events": [[t, list(dims)] for t, dims in self.change_events],
            "static_observations": [dict(o) for o in self.static_observations],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "SessionSnapshot":
        return cls(
            session_id=data["session_id"],
            tracker=TrackerState.from_dict(data["tracker"]),
            counter=int(data["counter"]),
            history=tuple(DialogueRecord.from_dict(r) for r in data["history"]),
            descriptor=_descriptor_from_dict(data["descriptor"]),
            descriptor_history=tuple((int(t), d) for t, d in data["descriptor_history"]),
            change_events=tuple((int(t), tuple(dims)) for t, dims in data["change_events"]),
            static_observations=tuple(
                {k: [float(x) for x in v] for k, v in o.items()} for o in data["static_observations"]
            ),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "SessionSnapshot":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass(frozen=True)
class TurnTrace:
    session_id: str
    turn: int
    t: int
    observation: dict
    estimates: dict[str, DimensionEstimate]
    report: ChangeReport
    triggered: tuple[str, ...]
    descriptor: str | None
    prompt: str
    response: str

    @property
    def style_injected(self) -> bool:
        return "Respond in style: " in self.prompt

    @staticmethod
    def csv_header() -> list[str]:
        cols = ["session_id", "turn", "t"]
        for name in DIMENSIONS:
            cols += [f"{name}_sw", f"{name}_ema", f"{name}_fused", f"{name}_delta",
                     f"{name}_score", f"{name}_triggered"]
        return cols + ["descriptor", "style_injected"]

    def csv_row(self) -> list:
        def fmt(vec):
            return ";".join(repr(x) for x in vec)

        row = [self.session_id, self.turn, self.t]
        for name in DIMENSIONS:
            est = self.estimates[name]
            row += [fmt(est.sw), fmt(est.ema), fmt(est.fused),
                    repr(self.report.deviations[name]), repr(self.report.scores[name]),
                    int(name in self.triggered)]
        return row + [self.descriptor or "", int(self.style_injected)]


def _observation_dict(vector: PreferenceVector) -> dict:
    out = {}
    for name, value in vector.items():
        out[name] = list(value.distribution) if name in CATEGORICAL_DIMENSIONS else [value.value]
    return out


def _static_descriptor(observations, vocabularies) -> PreferenceDescriptor:
    n = len(observations)
    mean = {}
    for name in DIMENSIONS:
        cols = zip(*(o[name] for o in observations))
        vec = tuple(math.fsum(c) / n for c in cols)
        mean[name] = vec if name in CATEGORICAL_DIMENSIONS else vec[0]
    return format_preference(mean, vocabularies)


def _choose_descriptor(session: SessionSnapshot, estimates, triggered, obs, config: PipelineConfig):
    ablation = config.ablation
    static_obs = session.static_observations
    if ablation.static_pref:
        if len(static_obs) < ablation.static_turns:
            static_obs = static_obs + (obs,)
            return _static_descriptor(static_obs, config.vocabularies), static_obs
        return session.descriptor, static_obs
    fresh = session.descriptor is None
    if ablation.disable_detection:
        rebuild = fresh
    elif config.gate_on_detection:
        rebuild = fresh or bool(triggered)
    else:
        rebuild = True
    if rebuild:
        return format_preference(estimates, config.vocabularies), static_obs
    return session.descriptor, static_obs


def run_turn(session: SessionSnapshot, record: DialogueRecord, config: PipelineConfig,
             backend: Backend, extractor: Extractor | None = None,
             log: GenerationLog | None = None):
    """Process one dialogue record.

    Assistant records only extend the history. User records go through the
    whole pipeline; a record carrying a ``qa`` payload is answered with its
    question (and memory context) as the user input.

    Returns ``(new_session, response, trace)``; `trace` is None for
    assistant records.
    """
    if record.session_id != session.session_id:
        raise ValueError(f"record belongs to {record.session_id!r}, not {session.session_id!r}")
    if record.turn <= session.counter:
        raise ValueError(f"turn {record.turn} does not follow turn {session.counter}")

    if record.speaker == "assistant":
        new = replace(session, counter=record.turn, history=session.history + (record,))
        return new, record.text, None

    ablation = config.ablation
    vector = extract(session.history, record, config.extraction, extractor, config.vocabularies)
    tracker, estimates, report = step(session.tracker, vector, config.effective_perception)

    triggered = report.triggered
    if ablation.disable_detection:
        triggered = ()
    elif ablation.single_pref is not None:
        triggered = tuple(d for d in triggered if d == ablation.single_pref)

    obs = _observation_dict(vector)
    descriptor, static_obs = _choose_descriptor(session, estimates, triggered, obs, config)
    shown = descriptor
    if shown is not None and ablation.single_pref is not None:
        shown = shown.restricted_to(ablation.single_pref)

    if record.qa is not None:
        user_input, memory = record.qa.question, record.qa.memory_context
    else:
        user_input, memory = record.text, ""
    prompt = build_prompt(shown, user_input, memory, inject=not ablation.disable_prompt)
    request = GenerationRequest(prompt, config.model, config.max_tokens, config.temperature)
    response = generate(request, backend, log)

    reply = DialogueRecord(record.session_id, record.turn, "assistant", response)
    shown_str = None if shown is None else str(shown)
    new = replace(
        session,
        tracker=tracker,
        counter=record.turn,
        history=session.history + (record, reply),
        descriptor=descriptor,
        descriptor_history=session.descriptor_history + ((record.turn, shown_str),),
        change_events=session.change_events + (((record.turn, triggered),) if triggered else ()),
        static_observations=static_obs,
    )
    trace = TurnTrace(record.session_id, record.turn, tracker.t, obs, estimates, report,
                      triggered, shown_str, prompt, response)
    return new, response, trace
