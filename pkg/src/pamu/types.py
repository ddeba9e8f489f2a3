"""Preference data model shared by every other module.

All types are frozen dataclasses, so they can be shared between threads and
used as dictionary keys where that makes sense.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

from pamu.errors import (
    ConfigError,
    DegenerateDistribution,
    NegativeMass,
    SumMismatch,
    VocabularyMismatch,
)

# Accept tolerance for incoming distributions vs. post-normalization check.
ACCEPT_TOL = 1e-6
SIMPLEX_TOL = 1e-9

DIMENSIONS = ("tone", "length", "emotion", "density", "formality")
CATEGORICAL_DIMENSIONS = ("tone", "emotion")
CONTINUOUS_DIMENSIONS = ("length", "density", "formality")

DEFAULT_TONE_LABELS = ("humorous", "neutral", "serious", "gentle")
DEFAULT_EMOTION_LABELS = ("joy", "neutral", "focused", "relaxed", "sadness", "anger")


def argmax(values: Sequence[float]) -> int:
    """Index of the largest entry, lowest index on ties."""
    best = 0
    for i in range(1, len(values)):
        if values[i] > values[best]:
            best = i
    return best


@dataclass(frozen=True)
class CategoryVocabulary:
    dimension_name: str
    labels: tuple[str, ...]

    def __post_init__(self):
        labels = tuple(self.labels)
        object.__setattr__(self, "labels", labels)
        if not labels:
            raise ConfigError(f"vocabulary for {self.dimension_name!r} is empty")
        if len(set(labels)) != len(labels):
            raise ConfigError(f"vocabulary for {self.dimension_name!r} has duplicate labels")

    def __len__(self) -> int:
        return len(self.labels)

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise VocabularyMismatch(
                f"{label!r} is not in the {self.dimension_name} vocabulary {list(self.labels)}"
            ) from None

    def label(self, index: int) -> str:
        return self.labels[index]


@dataclass(frozen=True)
class Vocabularies:
    """Category inventories for the two categorical dimensions of a session."""

    tone: CategoryVocabulary = field(
        default_factory=lambda: CategoryVocabulary("tone", DEFAULT_TONE_LABELS)
    )
    emotion: CategoryVocabulary = field(
        default_factory=lambda: CategoryVocabulary("emotion", DEFAULT_EMOTION_LABELS)
    )

    def get(self, dimension: str) -> CategoryVocabulary:
        if dimension == "tone":
            return self.tone
        if dimension == "emotion":
            return self.emotion
        raise KeyError(dimension)

    @classmethod
    def from_labels(cls, tone: Iterable[str] | None = None, emotion: Iterable[str] | None = None):
        kwargs = {}
        if tone is not None:
            kwargs["tone"] = CategoryVocabulary("tone", tuple(tone))
        if emotion is not None:
            kwargs["emotion"] = CategoryVocabulary("emotion", tuple(emotion))
        return cls(**kwargs)


@dataclass(frozen=True)
class CategoricalValue:
    """Category index plus the full probability vector it was drawn from."""

    index: int
    distribution: tuple[float, ...]

    def __post_init__(self):
        dist = tuple(float(x) for x in self.distribution)
        object.__setattr__(self, "distribution", dist)
        if not dist:
            raise DegenerateDistribution("empty distribution")
        if any(x < 0.0 for x in dist):
            raise NegativeMass(f"negative probability in {dist}")
        total = math.fsum(dist)
        if abs(total - 1.0) > SIMPLEX_TOL:
            raise SumMismatch(f"distribution sums to {total!r}")
        if self.index != argmax(dist):
            raise ValueError(f"index {self.index} is not the argmax of {dist}")

    @property
    def probability(self) -> float:
        return self.distribution[self.index]

    def __len__(self) -> int:
        return len(self.distribution)

    @classmethod
    def from_label(cls, vocabulary: CategoryVocabulary, label: str, probability: float):
        """One-label observation: `probability` on `label`, the rest spread evenly.

        Useful when a classifier (or a table) only reports its top class.
        """
        k = len(vocabulary)
        if not 0.0 <= probability <= 1.0:
            raise ValueError(f"probability {probability} outside [0, 1]")
        idx = vocabulary.index(label)
        if k == 1:
            return validate_distribution([1.0])
        rest = (1.0 - probability) / (k - 1)
        q = [rest] * k
        q[idx] = probability
        return validate_distribution(q)


def validate_distribution(q: Sequence[float]) -> CategoricalValue:
    """Check a classifier's probability vector and wrap it as a CategoricalValue.

    Sums within 1e-6 of one are renormalized; anything further off is
    rejected rather than silently rescaled.
    """
    values = [float(x) for x in q]
    if not values:
        raise DegenerateDistribution("empty distribution")
    if any(x < 0.0 for x in values):
        raise NegativeMass(f"negative probability in {values}")
    total = math.fsum(values)
    if total <= 0.0:
        raise DegenerateDistribution(f"distribution has no mass: {values}")
    if abs(total - 1.0) > ACCEPT_TOL:
        raise SumMismatch(f"distribution sums to {total!r}, expected 1")
    normalized = tuple(min(1.0, x / total) for x in values)
    return CategoricalValue(argmax(normalized), normalized)


@dataclass(frozen=True)
class ContinuousValue:
    value: float

    def __post_init__(self):
        v = float(self.value)
        if not (0.0 <= v <= 1.0):
            raise ValueError(f"continuous preference {v!r} outside [0, 1]")
        object.__setattr__(self, "value", v)

    def __float__(self) -> float:
        return self.value


@dataclass(frozen=True)
class PreferenceVector:
    """One turn's observation over the five preference dimensions."""

    tone: CategoricalValue
    length: ContinuousValue
    emotion: CategoricalValue
    density: ContinuousValue
    formality: ContinuousValue

    def __post_init__(self):
        for name in CATEGORICAL_DIMENSIONS:
            if not isinstance(getattr(self, name), CategoricalValue):
                raise TypeError(f"{name} must be a CategoricalValue")
        for name in CONTINUOUS_DIMENSIONS:
            value = getattr(self, name)
            if not isinstance(value, ContinuousValue):
                object.__setattr__(self, name, ContinuousValue(value))

    def __getitem__(self, dimension: str):
        if dimension not in DIMENSIONS:
            raise KeyError(dimension)
        return getattr(self, dimension)

    def items(self):
        return [(d, getattr(self, d)) for d in DIMENSIONS]

    def check_vocabularies(self, vocabularies: Vocabularies) -> None:
        for name in CATEGORICAL_DIMENSIONS:
            expected = len(vocabularies.get(name))
            got = len(getattr(self, name))
            if got != expected:
                raise VocabularyMismatch(
                    f"{name} distribution has {got} entries, vocabulary has {expected}"
                )


class LambdaMode(str, Enum):
    FIXED = "fixed"
    BAYESIAN = "bayesian"


class UpdateMode(str, Enum):
    SW_EMA_FUSION = "sw_ema_fusion"
    KALMAN = "kalman"


@dataclass(frozen=True)
class PerceptionConfig:
    """Tuning of the dual-timescale tracker and its change detector.

    ``variance_window`` sets how many trailing SW/EMA values feed the
    variance terms of the change score and the Bayesian weight; ``None``
    means "same as ``window``". ``kalman_gain`` pins the Kalman gain to a
    constant instead of deriving it from the prior and noise variances.
    """

    window: int = 5
    beta: float = 0.9
    lam: float = 0.5
    delta: float = 1.0
    epsilon: float = 1e-8
    lambda_mode: LambdaMode = LambdaMode.FIXED
    update_mode: UpdateMode = UpdateMode.SW_EMA_FUSION
    kalman_p0: float = 1.0
    kalman_r: float = 1.0
    kalman_q: float = 1e-3
    kalman_gain: float | None = None
    variance_window: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "lambda_mode", LambdaMode(self.lambda_mode))
        object.__setattr__(self, "update_mode", UpdateMode(self.update_mode))
        if isinstance(self.window, bool) or not isinstance(self.window, int) or self.window < 1:
            raise ConfigError(f"window must be a positive integer, got {self.window!r}")
        if not 0.0 < self.beta < 1.0:
            raise ConfigError(f"beta must lie in (0, 1), got {self.beta!r}")
        if not 0.0 <= self.lam <= 1.0:
            raise ConfigError(f"lambda must lie in [0, 1], got {self.lam!r}")
        if not self.delta > 0.0:
            raise ConfigError(f"delta must be positive, got {self.delta!r}")
        if not self.epsilon > 0.0:
            raise ConfigError(f"epsilon must be positive, got {self.epsilon!r}")
        if not self.kalman_p0 > 0.0:
            raise ConfigError("kalman_p0 must be positive")
        if not self.kalman_r > 0.0:
            raise ConfigError("kalman_r must be positive")
        if self.kalman_q < 0.0:
            raise ConfigError("kalman_q must be non-negative")
        if self.kalman_gain is not None and not 0.0 <= self.kalman_gain <= 1.0:
            raise ConfigError("kalman_gain must lie in [0, 1]")
        if self.variance_window is not None and self.variance_window < 1:
            raise ConfigError("variance_window must be a positive integer")

    @property
    def effective_variance_window(self) -> int:
        return self.window if self.variance_window is None else self.variance_window

    def to_dict(self) -> dict:
        return {
            "window": self.window,
            "beta": self.beta,
            "lam": self.lam,
            "delta": self.delta,
            "epsilon": self.epsilon,
            "lambda_mode": self.lambda_mode.value,
            "update_mode": self.update_mode.value,
            "kalman_p0": self.kalman_p0,
            "kalman_r": self.kalman_r,
            "kalman_q": self.kalman_q,
            "kalman_gain": self.kalman_gain,
            "variance_window": self.variance_window,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PerceptionConfig":
        return cls(**data)
