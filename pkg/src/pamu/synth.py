"""Synthetic preference-drift sessions with known change points.

A drift spec describes one session::

    {"session_id": "drift", "turns": 40, "seed": 0, "noise": 0.05,
     "dimensions": {
         "formality": {"knots": [[1, 0.1], [20, 0.9]], "interp": "step"},
         "density":   {"knots": [[10, 0.2], [30, 0.8]], "interp": "linear"},
         "tone":      {"knots": [[1, "humorous"], [20, "serious"]], "confidence": 0.9}}}

Continuous trajectories are piecewise constant (``step``) or piecewise
linear (``linear``) through the knots and flat outside them; Gaussian noise
of standard deviation ``noise`` is added and the result clipped to [0, 1].
Categorical trajectories switch label at each knot and carry
``confidence`` on the active label. Dimensions not listed stay flat
(0.5, or the "neutral" label when the vocabulary has one).

Every turn is fully annotated. A turn where some noise-free trajectory
starts to move is tagged with ``true_change``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from pamu.errors import InvalidSpec
from pamu.records import DialogueRecord, TurnSignals, dump_jsonl
from pamu.types import CATEGORICAL_DIMENSIONS, DIMENSIONS, Vocabularies

DECIMALS = 6


@dataclass(frozen=True)
class Trajectory:
    knots: tuple[tuple[int, object], ...]
    interp: str = "step"
    confidence: float = 0.9

    def value_at(self, turn: int):
        knots = self.knots
        if turn <= knots[0][0]:
            return knots[0][1]
        for (t0, v0), (t1, v1) in zip(knots, knots[1:]):
            if turn < t1:
                if self.interp == "linear" and not isinstance(v0, str):
                    return v0 + (v1 - v0) * (turn - t0) / (t1 - t0)
                return v0
        return knots[-1][1]


@dataclass(frozen=True)
class DriftSpec:
    session_id: str = "synthetic"
    turns: int = 40
    seed: int = 0
    noise: float = 0.0
    dimensions: Mapping[str, Trajectory] = field(default_factory=dict)

    @classmethod
    def from_dict(cls, data: Mapping, vocabularies: Vocabularies | None = None) -> "DriftSpec":
        vocabularies = vocabularies or Vocabularies()
        unknown = set(data) - {"session_id", "turns", "seed", "noise", "dimensions"}
        if unknown:
            raise InvalidSpec(f"unknown spec fields {sorted(unknown)}")
        turns = data.get("turns", 40)
        noise = data.get("noise", 0.0)
        if not isinstance(turns, int) or turns < 1:
            raise InvalidSpec("turns must be a positive integer")
        if not isinstance(noise, (int, float)) or noise < 0:
            raise InvalidSpec("noise must be non-negative")
        dims = {}
        for name, raw in dict(data.get("dimensions", {})).items():
            if name not in DIMENSIONS:
                raise InvalidSpec(f"unknown dimension {name!r}")
            dims[name] = _trajectory(name, raw, turns, vocabularies)
        return cls(str(data.get("session_id", "synthetic")), turns, int(data.get("seed", 0)),
                   float(noise), dims)


def _trajectory(name, raw, turns, vocabularies) -> Trajectory:
    if not isinstance(raw, Mapping) or "knots" not in raw:
        raise InvalidSpec(f"{name}: expected an object with 'knots'")
    interp = raw.get("interp", "step")
    if interp not in ("step", "linear"):
        raise InvalidSpec(f"{name}: interp must be 'step' or 'linear'")
    knots = []
    for knot in raw["knots"]:
        if not isinstance(knot, (list, tuple)) or len(knot) != 2:
            raise InvalidSpec(f"{name}: knots are [turn, value] pairs")
        turn, value = knot
        if not isinstance(turn, int) or not 1 <= turn <= turns:
            raise InvalidSpec(f"{name}: knot turn {turn!r} outside 1..{turns}")
        if name in CATEGORICAL_DIMENSIONS:
            if value not in vocabularies.get(name).labels:
                raise InvalidSpec(f"{name}: label {value!r} not in vocabulary")
        elif not isinstance(value, (int, float)) or not 0.0 <= value <= 1.0:
            raise InvalidSpec(f"{name}: value {value!r} outside [0, 1]")
        knots.append((turn, value if isinstance(value, str) else float(value)))
    if not knots:
        raise InvalidSpec(f"{name}: no knots")
    if any(b[0] <= a[0] for a, b in zip(knots, knots[1:])):
        raise InvalidSpec(f"{name}: knot turns must be strictly increasing")
    confidence = float(raw.get("confidence", 0.9))
    if not 0.0 < confidence <= 1.0:
        raise InvalidSpec(f"{name}: confidence must lie in (0, 1]")
    return Trajectory(tuple(knots), interp, confidence)


def _default_trajectory(name, vocabularies) -> Trajectory:
    if name in CATEGORICAL_DIMENSIONS:
        labels = vocabularies.get(name).labels
        return Trajectory(((1, "neutral" if "neutral" in labels else labels[0]),))
    return Trajectory(((1, 0.5),))


def _change_turns(trajectory: Trajectory, turns: int) -> set[int]:
    values = [trajectory.value_at(t) for t in range(1, turns + 1)]
    out = set()
    for i in range(1, len(values)):
        moved = values[i] != values[i - 1]
        was_still = i < 2 or values[i - 1] == values[i - 2]
        if moved and was_still:
            out.add(i + 1)
    return out


def synth_drift(spec: DriftSpec | Mapping, vocabularies: Vocabularies | None = None) -> list[DialogueRecord]:
    vocabularies = vocabularies or Vocabularies()
    if not isinstance(spec, DriftSpec):
        spec = DriftSpec.from_dict(spec, vocabularies)
    rng = np.random.default_rng(spec.seed)
    trajectories = {d: spec.dimensions.get(d) or _default_trajectory(d, vocabularies) for d in DIMENSIONS}
    changes = {d: _change_turns(trajectories[d], spec.turns) for d in DIMENSIONS}
    records = []
    for turn in range(1, spec.turns + 1):
        annotations = {}
        for name in DIMENSIONS:
            traj = trajectories[name]
            value = traj.value_at(turn)
            if name in CATEGORICAL_DIMENSIONS:
                annotations[name] = {"label": value, "p": traj.confidence}
            else:
                noisy = value + (spec.noise * rng.standard_normal() if spec.noise > 0 else 0.0)
                annotations[name] = round(min(max(noisy, 0.0), 1.0), DECIMALS)
        marked = tuple(d for d in DIMENSIONS if turn in changes[d])
        records.append(DialogueRecord(
            spec.session_id, turn, "user", f"synthetic turn {turn}",
            annotations=TurnSignals(**annotations), true_change=marked,
        ))
    return records


def load_specs(path) -> list[dict]:
    """A spec file holds one spec object or a list of them (JSON or YAML)."""
    text = Path(path).read_text(encoding="utf-8")
    if str(path).endswith((".yaml", ".yml")):
        import yaml
        data = yaml.safe_load(text)
    else:
        data = json.loads(text)
    return data if isinstance(data, list) else [data]


def write_dataset(specs: Sequence[Mapping], path, vocabularies: Vocabularies | None = None,
                  seed: int | None = None) -> list[DialogueRecord]:
    records = []
    for spec in specs:
        if seed is not None:
            spec = {**spec, "seed": seed}
        records.extend(synth_drift(spec, vocabularies))
    dump_jsonl(records, path)
    return records
