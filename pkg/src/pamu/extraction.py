"""Per-turn preference extraction.

`extract` assembles a PreferenceVector for the current turn. Any dimension
that arrives pre-annotated on the record passes through untouched; the rest
are filled by an extractor:

* `ScriptedExtractor` - annotations only, refuses to guess.
* `HeuristicExtractor` - lexicon, punctuation and pattern rules; offline
  and deterministic. These are fixtures for running the pipeline without
  models, not stand-ins for trained classifiers.
* `RemoteExtractor` - one HTTP classifier endpoint per dimension.

Word counts everywhere are whitespace token counts.
"""

from __future__ import annotations

import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import requests

from pamu.errors import (
    EmptyHistory,
    ExtractionError,
    ExtractorTimeout,
    ExtractorUnavailable,
    MalformedResponse,
    MissingAnnotation,
    NonSimplexScores,
    InvalidDistribution,
    ZeroLength,
)
from pamu.records import DialogueRecord
from pamu.types import (
    CATEGORICAL_DIMENSIONS,
    CONTINUOUS_DIMENSIONS,
    DIMENSIONS,
    CategoricalValue,
    CategoryVocabulary,
    ContinuousValue,
    PreferenceVector,
    Vocabularies,
    validate_distribution,
)

# first-turn value for length/density when no assistant response exists yet
NEUTRAL_MIDPOINT = 0.5

DEFAULT_TONE_LEXICON = {
    "humorous": ["haha", "hahaha", "lol", "lmao", "funny", "hilarious", "joke", "jokes",
                 "fun", "silly", "laugh", "kidding"],
    "serious": ["serious", "important", "urgent", "thorough", "detailed", "precise",
                "precisely", "explanation", "explain", "task", "facts", "must", "analysis"],
    "gentle": ["gently", "kindly", "softly", "gentle", "thank", "thanks", "appreciate", "sorry"],
    "neutral": [],
}

DEFAULT_EMOTION_LEXICON = {
    "joy": ["happy", "glad", "great", "love", "like", "good", "awesome", "yay", "fun",
            "haha", "hilarious", "excited"],
    "focused": ["need", "task", "focus", "thorough", "explain", "facts", "clear",
                "basics", "detailed", "precisely", "work"],
    "relaxed": ["chill", "relax", "relaxed", "calm", "easy", "casual", "whatever", "lazy"],
    "sadness": ["sad", "unhappy", "depressed", "miss", "lonely", "tired", "cry"],
    "anger": ["angry", "annoyed", "furious", "hate", "stupid", "mad", "ridiculous"],
    "neutral": [],
}

FORMAL_MARKERS = {"please", "kindly", "would", "could", "therefore", "however", "regarding",
                  "furthermore", "thus", "accordingly", "sincerely", "explanation",
                  "thorough", "provide", "require", "request"}
SLANG = {"lol", "haha", "hahaha", "lmao", "gonna", "wanna", "hey", "yeah", "yep", "cool",
         "awesome", "u", "ur", "ya", "kinda", "stuff", "ok", "okay", "omg", "dude"}
PRONOUNS = {"i", "me", "my", "you", "your", "we", "us"}

RELATION_VERBS = {
    "is", "are", "was", "were", "be", "been", "has", "have", "had", "uses", "use", "used",
    "contains", "contain", "includes", "include", "means", "mean", "causes", "cause",
    "makes", "make", "provides", "provide", "allows", "allow", "requires", "require",
    "represents", "represent", "creates", "create", "enables", "enable", "stores", "store",
    "describes", "produces", "called", "consists", "depends", "relies", "holds", "gives",
    "shows", "lives", "works", "likes", "loves", "went", "visited", "bought", "born",
}

_WORD = re.compile(r"[a-z0-9']+")
_CLAUSE_SPLIT = re.compile(r"[.;!?\n]+|,\s+(?:and|but|while|whereas)\s+")

# prior mass per label before lexicon hits; neutral wins when nothing matches
_NEUTRAL_PRIOR = 0.5
_OTHER_PRIOR = 0.1
_HISTORY_WEIGHT = 0.5


@dataclass(frozen=True)
class ExtractionConfig:
    history_turns: int = 5
    max_tokens: int = 512
    tone_lexicon: Mapping[str, Sequence[str]] = field(default_factory=lambda: DEFAULT_TONE_LEXICON)
    emotion_lexicon: Mapping[str, Sequence[str]] = field(default_factory=lambda: DEFAULT_EMOTION_LEXICON)

    def __post_init__(self):
        if self.history_turns < 1:
            raise ValueError("history_turns must be >= 1")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")

    def lexicon(self, dimension: str) -> Mapping[str, Sequence[str]]:
        return self.tone_lexicon if dimension == "tone" else self.emotion_lexicon


def word_count(text: str) -> int:
    return len(text.split())


def information_density(triple_count: int, word_count: int) -> ContinuousValue:
    """Knowledge triples per word, capped at 1."""
    if word_count == 0:
        raise ZeroLength("response has no words")
    if word_count < 0 or triple_count < 0:
        raise ValueError("counts must be non-negative")
    return ContinuousValue(min(triple_count / word_count, 1.0))


def normalized_length(responses: Sequence[int], k: int, max_tokens: int) -> ContinuousValue:
    """Mean token count of the last `k` responses over `max_tokens`, clamped."""
    if not responses:
        raise EmptyHistory("no responses to average")
    recent = list(responses)[-k:]
    mean = sum(recent) / len(recent)
    return ContinuousValue(min(max(mean / max_tokens, 0.0), 1.0))


def count_triples(text: str) -> int:
    """Rough (subject, relation, object) count.

    A clause contributes one triple per relation verb that has at least one
    word on each side of it.
    """
    total = 0
    for clause in _CLAUSE_SPLIT.split(text.lower()):
        words = _WORD.findall(clause)
        for i, w in enumerate(words):
            if w in RELATION_VERBS and 0 < i < len(words) - 1:
                total += 1
    return total


def lexicon_distribution(text: str, vocabulary: CategoryVocabulary,
                         lexicon: Mapping[str, Sequence[str]],
                         context: str = "") -> CategoricalValue:
    """Keyword-count distribution over `vocabulary`.

    Hits in `text` count 1, hits in `context` (the previous user turn) count
    half. Labels missing from the lexicon only get their prior.
    """
    words = _WORD.findall(text.lower())
    context_words = _WORD.findall(context.lower())
    scores = []
    for label in vocabulary.labels:
        keys = set(lexicon.get(label, ()))
        hits = sum(w in keys for w in words) + _HISTORY_WEIGHT * sum(w in keys for w in context_words)
        prior = _NEUTRAL_PRIOR if label == "neutral" else _OTHER_PRIOR
        scores.append(prior + hits)
    total = sum(scores)
    return validate_distribution([s / total for s in scores])


def formality_score(text: str) -> ContinuousValue:
    """Punctuation/pronoun/register heuristic in [0, 1]; 0.5 is unmarked."""
    words = _WORD.findall(text.lower())
    if not words:
        return ContinuousValue(NEUTRAL_MIDPOINT)
    score = 0.5
    score -= 0.08 * sum("'" in w for w in words)
    score -= 0.05 * min(text.count("!"), 4)
    score -= 0.10 * sum(w in SLANG for w in words)
    score -= 0.03 * sum(w in PRONOUNS for w in words)
    score += 0.10 * sum(w in FORMAL_MARKERS for w in words)
    mean_len = sum(len(w) for w in words) / len(words)
    score += 0.08 * (mean_len - 4.5)
    stripped = text.strip()
    if stripped.endswith("."):
        score += 0.05
    if stripped[:1].isupper():
        score += 0.05
    elif stripped == stripped.lower():
        score -= 0.05
    return ContinuousValue(min(max(score, 0.0), 1.0))


def _assistant_turns(history: Sequence[DialogueRecord]) -> list[DialogueRecord]:
    return [r for r in history if r.speaker == "assistant"]


def _previous_user_text(history: Sequence[DialogueRecord]) -> str:
    for record in reversed(history):
        if record.speaker == "user":
            return record.text
    return ""


class Extractor:
    """Fills the dimensions a record did not come annotated with."""

    def fill(self, dimensions: Sequence[str], history: Sequence[DialogueRecord],
             current: DialogueRecord, config: ExtractionConfig,
             vocabularies: Vocabularies) -> dict:
        raise NotImplementedError


class ScriptedExtractor(Extractor):
    def fill(self, dimensions, history, current, config, vocabularies):
        if dimensions:
            raise MissingAnnotation(
                f"turn {current.turn} of {current.session_id!r} lacks annotations for {list(dimensions)}"
            )
        return {}


class HeuristicExtractor(Extractor):
    def fill(self, dimensions, history, current, config, vocabularies):
        out = {}
        for name in dimensions:
            if name in CATEGORICAL_DIMENSIONS:
                out[name] = lexicon_distribution(
                    current.text, vocabularies.get(name), config.lexicon(name),
                    context=_previous_user_text(history),
                )
            elif name == "length":
                out[name] = self._length(history, config)
            elif name == "density":
                out[name] = self._density(history)
            elif name == "formality":
                out[name] = formality_score(current.text)
            else:
                raise KeyError(name)
        return out

    @staticmethod
    def _length(history, config):
        counts = []
        for record in _assistant_turns(history):
            signals = record.signals
            counts.append(signals.token_count if signals.token_count is not None else word_count(record.text))
        if not counts:
            return ContinuousValue(NEUTRAL_MIDPOINT)
        return normalized_length(counts, config.history_turns, config.max_tokens)

    @staticmethod
    def _density(history):
        responses = _assistant_turns(history)
        if not responses:
            return ContinuousValue(NEUTRAL_MIDPOINT)
        last = responses[-1]
        signals = last.signals
        words = signals.token_count if signals.token_count is not None else word_count(last.text)
        if words == 0:
            return ContinuousValue(NEUTRAL_MIDPOINT)
        triples = signals.triple_count if signals.triple_count is not None else count_triples(last.text)
        return information_density(triples, words)


def remote_extract(endpoint: str, text: str, dimension: str, timeout: float = 10.0,
                   vocabulary: CategoryVocabulary | None = None,
                   session: requests.Session | None = None):
    """Ask an HTTP classifier for one dimension.

    Request body ``{"text": ..., "dimension": ...}``; the reply is either
    ``{"labels": [...], "scores": [...]}`` or ``{"value": x}``. With a
    `vocabulary`, labels are mapped into vocabulary order (unlisted labels
    get zero mass).
    """
    poster = session or requests
    try:
        resp = poster.post(endpoint, json={"text": text, "dimension": dimension}, timeout=timeout)
    except requests.Timeout as exc:
        raise ExtractorTimeout(f"{endpoint} timed out after {timeout}s") from exc
    except requests.RequestException as exc:
        raise ExtractorUnavailable(f"{endpoint} unreachable: {exc}") from exc
    if resp.status_code != 200:
        raise ExtractorUnavailable(f"{endpoint} returned HTTP {resp.status_code}")
    try:
        payload = resp.json()
    except ValueError as exc:
        raise MalformedResponse(f"{endpoint} did not return JSON") from exc
    if not isinstance(payload, dict):
        raise MalformedResponse(f"expected a JSON object, got {type(payload).__name__}")
    return parse_classifier_payload(payload, dimension, vocabulary)


def parse_classifier_payload(payload: Mapping, dimension: str,
                             vocabulary: CategoryVocabulary | None = None):
    if "value" in payload:
        if dimension in CATEGORICAL_DIMENSIONS:
            raise MalformedResponse(f"{dimension} is categorical but got a scalar value")
        try:
            return ContinuousValue(float(payload["value"]))
        except (TypeError, ValueError) as exc:
            raise MalformedResponse(f"bad value {payload['value']!r}") from exc
    if "scores" not in payload:
        raise MalformedResponse("response has neither 'value' nor 'scores'")
    if dimension in CONTINUOUS_DIMENSIONS:
        raise MalformedResponse(f"{dimension} is continuous but got class scores")
    try:
        scores = [float(s) for s in payload["scores"]]
    except (TypeError, ValueError) as exc:
        raise MalformedResponse("scores must be numbers") from exc
    labels = payload.get("labels")
    if labels is not None and len(labels) != len(scores):
        raise MalformedResponse("labels and scores differ in length")
    if vocabulary is not None:
        if labels is None:
            if len(scores) != len(vocabulary):
                raise MalformedResponse("unlabelled scores do not match the vocabulary size")
        else:
            mapped = [0.0] * len(vocabulary)
            for label, score in zip(labels, scores):
                try:
                    mapped[vocabulary.labels.index(label)] += score
                except ValueError:
                    raise MalformedResponse(f"label {label!r} not in {dimension} vocabulary") from None
            scores = mapped
    try:
        return validate_distribution(scores)
    except InvalidDistribution as exc:
        raise NonSimplexScores(str(exc)) from exc


class RemoteExtractor(Extractor):
    """Per-dimension HTTP classifiers; dimensions without an endpoint use `fallback`.

    Calls for different dimensions run concurrently; results are gathered
    back into the fixed dimension order.
    """

    def __init__(self, endpoints: Mapping[str, str], timeout: float = 10.0,
                 fallback: Extractor | None = None, max_workers: int = 5):
        unknown = set(endpoints) - set(DIMENSIONS)
        if unknown:
            raise ValueError(f"unknown dimensions {sorted(unknown)}")
        self.endpoints = dict(endpoints)
        self.timeout = timeout
        self.fallback = fallback or HeuristicExtractor()
        self.max_workers = max_workers

    def _text_for(self, dimension, history, current):
        if dimension in ("length", "density"):
            responses = _assistant_turns(history)
            if responses:
                return responses[-1].text
        return current.text

    def fill(self, dimensions, history, current, config, vocabularies):
        remote = [d for d in dimensions if d in self.endpoints]
        local = [d for d in dimensions if d not in self.endpoints]
        out = self.fallback.fill(local, history, current, config, vocabularies) if local else {}
        if remote:
            with ThreadPoolExecutor(max_workers=self.max_workers) as pool:
                futures = {
                    d: pool.submit(
                        remote_extract, self.endpoints[d], self._text_for(d, history, current), d,
                        self.timeout, vocabularies.get(d) if d in CATEGORICAL_DIMENSIONS else None,
                    )
                    for d in remote
                }
                for d in remote:
                    out[d] = futures[d].result()
        return {d: out[d] for d in dimensions}


def extract(history: Sequence[DialogueRecord], current: DialogueRecord,
            config: ExtractionConfig | None = None, extractor: Extractor | None = None,
            vocabularies: Vocabularies | None = None) -> PreferenceVector:
    """Preference observation for `current`, given the turns before it."""
    config = config or ExtractionConfig()
    vocabularies = vocabularies or Vocabularies()
    extractor = extractor or HeuristicExtractor()
    signals = current.signals
    if not current.text.strip() and not signals.complete:
        raise ExtractionError(
            f"turn {current.turn} of {current.session_id!r} has neither text nor complete annotations"
        )
    values = {}
    missing = []
    for name in DIMENSIONS:
        vocab = vocabularies.get(name) if name in CATEGORICAL_DIMENSIONS else None
        value = signals.resolve(name, vocab)
        if value is None:
            missing.append(name)
        else:
            values[name] = value
    if missing:
        values.update(extractor.fill(missing, history, current, config, vocabularies))
    vector = PreferenceVector(**{name: values[name] for name in DIMENSIONS})
    vector.check_vocabularies(vocabularies)
    return vector
