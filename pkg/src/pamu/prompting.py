"""Turn fused preference estimates into a style descriptor and a prompt."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

from pamu.errors import OutOfRange
from pamu.types import CONTINUOUS_DIMENSIONS, Vocabularies, argmax

STYLE_PREFIX = "Respond in style: "

LOW_CUT = 0.33
HIGH_CUT = 0.66

TAGS = {
    "density": ("Sparse", "Moderate", "Dense"),
    "length": ("Brief", "Medium", "Detailed"),
    "formality": ("Colloquial", "Neutral", "Formal"),
}

# display order inside the bracketed descriptor
FIELD_ORDER = (
    ("tone", "Tone"),
    ("emotion", "Emotion"),
    ("density", "Density"),
    ("length", "Length"),
    ("formality", "Formality"),
)


def quantize(value: float, dimension: str) -> str:
    """Three-level tag for a continuous preference in [0, 1].

    Bands are [0, 0.33), [0.33, 0.66) and [0.66, 1], left-closed, with the
    top band closed on the right.
    """
    if dimension not in TAGS:
        raise KeyError(f"no tag table for dimension {dimension!r}")
    if not 0.0 <= value <= 1.0:
        raise OutOfRange(f"{dimension} value {value!r} outside [0, 1]")
    low, mid, high = TAGS[dimension]
    if value < LOW_CUT:
        return low
    if value < HIGH_CUT:
        return mid
    return high


@dataclass(frozen=True)
class PreferenceDescriptor:
    """Human-readable labels per dimension. ``None`` fields are omitted."""

    tone: str | None = None
    emotion: str | None = None
    density: str | None = None
    length: str | None = None
    formality: str | None = None

    def __str__(self) -> str:
        parts = [f"{title}: {getattr(self, name)}" for name, title in FIELD_ORDER
                 if getattr(self, name) is not None]
        return "[" + ", ".join(parts) + "]"

    def restricted_to(self, dimension: str) -> "PreferenceDescriptor":
        return PreferenceDescriptor(**{dimension: getattr(self, dimension)})

    def to_dict(self) -> dict:
        return {name: getattr(self, name) for name, _ in FIELD_ORDER}


def _fused_of(value):
    fused = getattr(value, "fused", value)
    if isinstance(fused, (int, float)):
        return (float(fused),)
    return tuple(fused)


def format_preference(fused: Mapping, vocabularies: Vocabularies | None = None) -> PreferenceDescriptor:
    """Descriptor from a fused estimate.

    `fused` maps dimension names to DimensionEstimate objects (as returned by
    `perception.step`), to raw probability vectors for tone/emotion, or to
    floats for the continuous dimensions.
    """
    vocabularies = vocabularies or Vocabularies()
    labels = {}
    for name in ("tone", "emotion"):
        if name not in fused:
            continue
        value = fused[name]
        label = getattr(value, "label", None)
        if label is None:
            label = argmax(_fused_of(value))
        labels[name] = vocabularies.get(name).label(label)
    for name in CONTINUOUS_DIMENSIONS:
        if name in fused:
            labels[name] = quantize(_fused_of(fused[name])[0], name)
    return PreferenceDescriptor(**labels)


def build_prompt(descriptor: PreferenceDescriptor | None, user_input: str,
                 memory_context: str = "", inject: bool = True) -> str:
    """Assemble the generation prompt.

    Layout: optional memory context line(s), the style line, then the user
    input verbatim. With ``inject=False`` (or no descriptor) the style line
    is dropped.
    """
    if not user_input:
        raise ValueError("user_input must be non-empty")
    parts = []
    if memory_context:
        parts.append(memory_context)
    if inject and descriptor is not None:
        parts.append(STYLE_PREFIX + str(descriptor))
    parts.append(user_input)
    return "\n".join(parts)
