"""Preference-aware memory update: track drifting user style preferences and
turn them into prompt instructions."""

from importlib import resources

from pamu.errors import PamuError
from pamu.evaluation import MetricReport, bleu1, detection_stats, token_f1
from pamu.extraction import ExtractionConfig, HeuristicExtractor, RemoteExtractor, ScriptedExtractor, extract
from pamu.generation import GenerationRequest, HttpBackend, MockBackend, generate
from pamu.perception import PreferenceTracker, TrackerState, step
from pamu.pipeline import ABLATIONS, AblationConfig, PipelineConfig, SessionSnapshot, run_turn
from pamu.prompting import PreferenceDescriptor, build_prompt, format_preference, quantize
from pamu.records import DialogueRecord, load_jsonl
from pamu.replay import replay
from pamu.synth import synth_drift
from pamu.types import PerceptionConfig, PreferenceVector, Vocabularies


def data_path(name: str):
    """Path of a bundled fixture (``style_shift.jsonl``, ``sessions.jsonl``, ``drift.json``)."""
    return resources.files("pamu") / "data" / name


__all__ = [
    "ABLATIONS", "AblationConfig", "DialogueRecord", "ExtractionConfig", "GenerationRequest",
    "HeuristicExtractor", "HttpBackend", "MetricReport", "MockBackend", "PamuError",
    "PerceptionConfig", "PipelineConfig", "PreferenceDescriptor", "PreferenceTracker",
    "PreferenceVector", "RemoteExtractor", "ScriptedExtractor", "SessionSnapshot", "TrackerState",
    "Vocabularies", "bleu1", "build_prompt", "data_path", "detection_stats", "extract",
    "format_preference", "generate", "load_jsonl", "quantize", "replay", "run_turn", "step",
    "synth_drift", "token_f1",
]
