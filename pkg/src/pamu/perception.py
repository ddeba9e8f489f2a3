"""Dual-timescale preference tracking and shift detection.

Each preference dimension is tracked with a short sliding-window mean and a
long exponential moving average. The two are blended into a fused estimate,
and their disagreement, normalised by their recent variability, is the
change score. Continuous dimensions are 1-vectors internally; categorical
dimensions are probability vectors over the session vocabulary, so one code
path serves both.

Everything here is pure: `step` returns a new `TrackerState` and never
touches its input.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

from pamu.errors import InsufficientHistory, VocabularyMismatch
from pamu.types import (
    CATEGORICAL_DIMENSIONS,
    DIMENSIONS,
    CategoricalValue,
    ContinuousValue,
    LambdaMode,
    PerceptionConfig,
    PreferenceVector,
    UpdateMode,
    Vocabularies,
    argmax,
)

Vector = tuple[float, ...]


# ---------------------------------------------------------------------------
# scalar building blocks
# ---------------------------------------------------------------------------

def sw_update(buffer: deque, value: float) -> float:
    """Push `value` into a bounded deque and return the mean of its contents.

    The deque's ``maxlen`` is the window; during warm-up the mean runs over
    however many values have arrived.
    """
    if buffer.maxlen is None:
        raise ValueError("sliding-window buffer needs a maxlen")
    buffer.append(value)
    return sum(buffer) / len(buffer)


def ema_update(prev: float | None, value: float, beta: float) -> float:
    if prev is None:
        return value
    return beta * prev + (1.0 - beta) * value


def fuse(sw: float, ema: float, lam: float) -> float:
    """Convex blend of the short- and long-term estimates."""
    if lam == 1.0:
        return sw
    if lam == 0.0:
        return ema
    lo, hi = (sw, ema) if sw <= ema else (ema, sw)
    # rounding can push the blend one ulp past an endpoint
    return min(hi, max(lo, lam * sw + (1.0 - lam) * ema))


def kalman_update(prev: float, value: float, prior: float, noise: float) -> tuple[float, float]:
    """One scalar Kalman correction. Returns ``(estimate, gain)``."""
    if prior <= 0.0:
        raise ValueError("prior variance must be positive")
    if noise < 0.0:
        raise ValueError("observation noise must be non-negative")
    gain = prior / (prior + noise)
    if gain == 1.0:
        return value, gain
    return prev + gain * (value - prev), gain


def kalman_next_prior(prior: float, gain: float, process_noise: float) -> float:
    return (1.0 - gain) * prior + process_noise


def sample_variance(values: Sequence[float]) -> float:
    """Unbiased variance; 0 for fewer than two values."""
    n = len(values)
    if n < 2:
        return 0.0
    mean = math.fsum(values) / n
    return math.fsum((v - mean) ** 2 for v in values) / (n - 1)


def _spread(history: Sequence[Vector]) -> float:
    """Variance of a scalar or distribution-valued series.

    Distributions use half the summed per-component variance, which reduces
    to the plain variance for a two-category vocabulary.
    """
    if not history:
        return 0.0
    size = len(history[0])
    total = math.fsum(sample_variance([h[j] for h in history]) for j in range(size))
    return total if size == 1 else 0.5 * total


def _as_vectors(history) -> list[Vector]:
    return [tuple(h) if isinstance(h, (tuple, list)) else (float(h),) for h in history]


def _deviation(sw: Vector, ema: Vector) -> float:
    if len(sw) == 1:
        return abs(sw[0] - ema[0])
    return 0.5 * math.fsum(abs(a - b) for a, b in zip(sw, ema))


def change_score(sw, ema, sw_history, ema_history, epsilon: float = 1e-8,
                 window: int | None = None) -> tuple[float, float]:
    """Deviation between the two estimators and its normalised score.

    Scalars give ``|sw - ema|``; probability vectors give the total-variation
    distance. The score divides the deviation by ``epsilon`` plus the root of
    the summed variances of the trailing ``window`` history entries.
    """
    sw_v = tuple(sw) if isinstance(sw, (tuple, list)) else (float(sw),)
    ema_v = tuple(ema) if isinstance(ema, (tuple, list)) else (float(ema),)
    sw_h = _as_vectors(sw_history)
    ema_h = _as_vectors(ema_history)
    if window is not None:
        sw_h, ema_h = sw_h[-window:], ema_h[-window:]
    deviation = _deviation(sw_v, ema_v)
    score = deviation / (epsilon + math.sqrt(_spread(sw_h) + _spread(ema_h)))
    return deviation, score


def bayesian_lambda(sw_history, ema_history, window: int | None = None,
                    epsilon: float = 1e-8) -> float:
    """Data-dependent weight on the sliding window.

    The short-term estimator gets weight tau^2 / (sigma^2 + tau^2), where
    sigma^2 and tau^2 are the trailing variances of the SW and EMA series.
    When both are below `epsilon` there is nothing to choose between them
    and the weight is 0.5.
    """
    sw_h = _as_vectors(sw_history)
    ema_h = _as_vectors(ema_history)
    if len(sw_h) < 2 or len(ema_h) < 2:
        raise InsufficientHistory("need at least two entries in each history")
    if window is not None:
        sw_h, ema_h = sw_h[-window:], ema_h[-window:]
    sigma2 = _spread(sw_h)
    tau2 = _spread(ema_h)
    if sigma2 < epsilon and tau2 < epsilon:
        return 0.5
    return tau2 / (sigma2 + tau2)


# ---------------------------------------------------------------------------
# tracker state
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DimensionSpec:
    name: str
    size: int = 1
    categorical: bool = False


def default_specs(vocabularies: Vocabularies | None = None) -> tuple[DimensionSpec, ...]:
    vocabularies = vocabularies or Vocabularies()
    specs = []
    for name in DIMENSIONS:
        if name in CATEGORICAL_DIMENSIONS:
            specs.append(DimensionSpec(name, len(vocabularies.get(name)), True))
        else:
            specs.append(DimensionSpec(name))
    return tuple(specs)


@dataclass(frozen=True)
class DimensionState:
    window: tuple[Vector, ...] = ()
    ema: Vector | None = None
    sw_history: tuple[Vector, ...] = ()
    ema_history: tuple[Vector, ...] = ()
    kalman_estimate: Vector | None = None
    kalman_prior: float | None = None
    fused: Vector | None = None
    label: int | None = None


@dataclass(frozen=True)
class TrackerState:
    specs: tuple[DimensionSpec, ...]
    dims: tuple[DimensionState, ...]
    t: int = 0

    @classmethod
    def initial(cls, specs: Sequence[DimensionSpec] | None = None) -> "TrackerState":
        specs = tuple(specs) if specs is not None else default_specs()
        return cls(specs, tuple(DimensionState() for _ in specs), 0)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(s.name for s in self.specs)

    def dimension(self, name: str) -> DimensionState:
        return self.dims[self.names.index(name)]

    def to_dict(self) -> dict:
        def vec(v):
            return None if v is None else list(v)

        return {
            "t": self.t,
            "specs": [{"name": s.name, "size": s.size, "categorical": s.categorical} for s in self.specs],
            "dims": [
                {
                    "window": [list(v) for v in d.window],
                    "ema": vec(d.ema),
                    "sw_history": [list(v) for v in d.sw_history],
                    "ema_history": [list(v) for v in d.ema_history],
                    "kalman_estimate": vec(d.kalman_estimate),
                    "kalman_prior": d.kalman_prior,
                    "fused": vec(d.fused),
                    "label": d.label,
                }
                for d in self.dims
            ],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "TrackerState":
        def vec(v):
            return None if v is None else tuple(float(x) for x in v)

        specs = tuple(DimensionSpec(s["name"], int(s["size"]), bool(s["categorical"])) for s in data["specs"])
        dims = tuple(
            DimensionState(
                window=tuple(vec(v) for v in d["window"]),
                ema=vec(d["ema"]),
                sw_history=tuple(vec(v) for v in d["sw_history"]),
                ema_history=tuple(vec(v) for v in d["ema_history"]),
                kalman_estimate=vec(d["kalman_estimate"]),
                kalman_prior=d["kalman_prior"],
                fused=vec(d["fused"]),
                label=d["label"],
            )
            for d in data["dims"]
        )
        return cls(specs, dims, int(data["t"]))


@dataclass(frozen=True)
class DimensionEstimate:
    name: str
    sw: Vector
    ema: Vector
    fused: Vector
    lam: float
    label: int | None = None
    gain: float | None = None

    @property
    def value(self) -> float:
        """Fused scalar for continuous dimensions."""
        if len(self.fused) != 1:
            raise TypeError(f"{self.name} is categorical; use .fused or .label")
        return self.fused[0]


@dataclass(frozen=True)
class ChangeReport:
    deviations: dict[str, float] = field(default_factory=dict)
    scores: dict[str, float] = field(default_factory=dict)
    triggered: tuple[str, ...] = ()


# ---------------------------------------------------------------------------
# vector updates
# ---------------------------------------------------------------------------

def _window_mean(window: Sequence[Vector]) -> Vector:
    n = len(window)
    return tuple(sum(col) / n for col in zip(*window))


def _advance_window(dim: DimensionState, obs: Vector, width: int):
    buf = deque(dim.window, maxlen=width)
    buf.append(obs)
    return tuple(buf), _window_mean(buf)


def _ema_vec(prev: Vector | None, obs: Vector, beta: float) -> Vector:
    if prev is None:
        return obs
    return tuple(ema_update(a, b, beta) for a, b in zip(prev, obs))


def _fuse_vec(sw: Vector, ema: Vector, lam: float) -> Vector:
    return tuple(fuse(a, b, lam) for a, b in zip(sw, ema))


def categorical_update(state: DimensionState, q, window: int, beta: float,
                       lam: float) -> tuple[DimensionState, Vector, int]:
    """Window/EMA/fusion over a probability vector.

    Returns the advanced dimension state, the fused distribution and its
    control label (argmax, lowest index on ties).
    """
    q = tuple(q.distribution) if isinstance(q, CategoricalValue) else tuple(float(x) for x in q)
    if state.window and len(state.window[0]) != len(q):
        raise VocabularyMismatch(
            f"distribution has {len(q)} entries, tracker expects {len(state.window[0])}"
        )
    win, sw = _advance_window(state, q, window)
    ema = _ema_vec(state.ema, q, beta)
    fused = _fuse_vec(sw, ema, lam)
    label = argmax(fused)
    new = replace(
        state,
        window=win,
        ema=ema,
        sw_history=(state.sw_history + (sw,))[-window:],
        ema_history=(state.ema_history + (ema,))[-window:],
        fused=fused,
        label=label,
    )
    return new, fused, label


def _observation_vectors(obs, specs: Sequence[DimensionSpec]) -> list[Vector]:
    out = []
    for spec in specs:
        if isinstance(obs, PreferenceVector):
            value = obs[spec.name]
        else:
            try:
                value = obs[spec.name]
            except KeyError:
                raise VocabularyMismatch(f"observation lacks dimension {spec.name!r}") from None
        if isinstance(value, CategoricalValue):
            vec = value.distribution
        elif isinstance(value, ContinuousValue):
            vec = (value.value,)
        elif isinstance(value, (tuple, list)):
            vec = tuple(float(x) for x in value)
        else:
            vec = (float(value),)
        if len(vec) != spec.size:
            raise VocabularyMismatch(
                f"{spec.name}: observation has {len(vec)} entries, tracker expects {spec.size}"
            )
        out.append(vec)
    return out


def _advance(spec: DimensionSpec, dim: DimensionState, obs: Vector, config: PerceptionConfig):
    keep = max(config.window, config.effective_variance_window)
    var_window = config.effective_variance_window

    win, sw = _advance_window(dim, obs, config.window)
    ema = _ema_vec(dim.ema, obs, config.beta)
    sw_hist = (dim.sw_history + (sw,))[-keep:]
    ema_hist = (dim.ema_history + (ema,))[-keep:]

    if config.lambda_mode is LambdaMode.BAYESIAN:
        if len(sw_hist) >= 2:
            lam = bayesian_lambda(sw_hist, ema_hist, window=var_window, epsilon=config.epsilon)
        else:
            lam = 0.5
    else:
        lam = config.lam

    gain = None
    k_est, k_prior = dim.kalman_estimate, dim.kalman_prior
    if config.update_mode is UpdateMode.KALMAN:
        if k_est is None:
            k_est, k_prior = obs, config.kalman_p0
        else:
            if config.kalman_gain is not None:
                gain = config.kalman_gain
                k_est = tuple(prev + gain * (p - prev) for prev, p in zip(k_est, obs))
            else:
                updates = [kalman_update(prev, p, k_prior, config.kalman_r) for prev, p in zip(k_est, obs)]
                k_est = tuple(u[0] for u in updates)
                gain = updates[0][1]
            k_prior = kalman_next_prior(k_prior, gain, config.kalman_q)
        fused = k_est
    else:
        fused = _fuse_vec(sw, ema, lam)

    label = argmax(fused) if spec.categorical else None
    deviation, score = change_score(sw, ema, sw_hist, ema_hist, config.epsilon, window=var_window)
    new = DimensionState(
        window=win,
        ema=ema,
        sw_history=sw_hist,
        ema_history=ema_hist,
        kalman_estimate=k_est,
        kalman_prior=k_prior,
        fused=fused,
        label=label,
    )
    estimate = DimensionEstimate(spec.name, sw, ema, fused, lam, label, gain)
    return new, estimate, deviation, score


def step(state: TrackerState, observation, config: PerceptionConfig):
    """Feed one turn's observation through every tracked dimension.

    `observation` is a PreferenceVector or any mapping from dimension name to
    a scalar, a CategoricalValue or a probability sequence. Returns
    ``(new_state, estimates, report)`` where `estimates` maps each dimension
    name to its DimensionEstimate.
    """
    vectors = _observation_vectors(observation, state.specs)
    dims, estimates, deviations, scores = [], {}, {}, {}
    for spec, dim, obs in zip(state.specs, state.dims, vectors):
        new_dim, est, dev, score = _advance(spec, dim, obs, config)
        dims.append(new_dim)
        estimates[spec.name] = est
        deviations[spec.name] = dev
        scores[spec.name] = score
    triggered = tuple(name for name in state.names if scores[name] > config.delta)
    report = ChangeReport(deviations, scores, triggered)
    return TrackerState(state.specs, tuple(dims), state.t + 1), estimates, report


class PreferenceTracker:
    """Stateful convenience wrapper around `step` for a single session."""

    def __init__(self, config: PerceptionConfig | None = None,
                 vocabularies: Vocabularies | None = None,
                 specs: Sequence[DimensionSpec] | None = None):
        self.config = config or PerceptionConfig()
        self.state = TrackerState.initial(specs if specs is not None else default_specs(vocabularies))
        self.last_report: ChangeReport | None = None

    def update(self, observation):
        self.state, estimates, self.last_report = step(self.state, observation, self.config)
        return estimates, self.last_report
