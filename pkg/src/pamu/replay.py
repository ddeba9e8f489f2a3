"""Replay a JSONL dialogue dataset through the pipeline and score it."""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from pamu.errors import PamuError
from pamu.evaluation import MetricReport, detection_stats
from pamu.extraction import Extractor
from pamu.generation import Backend, GenerationLog
from pamu.pipeline import PipelineConfig, SessionSnapshot, TurnTrace, run_turn
from pamu.records import DialogueRecord, group_sessions, load_jsonl

log = logging.getLogger(__name__)


@dataclass
class SessionResult:
    snapshot: SessionSnapshot
    traces: list[TurnTrace] = field(default_factory=list)
    answers: list[dict] = field(default_factory=list)
    error: Exception | None = None


def run_session(records: Sequence[DialogueRecord], config: PipelineConfig, backend: Backend,
                extractor: Extractor | None = None, gen_log: GenerationLog | None = None,
                snapshot: SessionSnapshot | None = None) -> SessionResult:
    """Run one session's records in order.

    Stops at the first failing turn and keeps the last good snapshot so the
    session can be resumed from there.
    """
    session = snapshot or SessionSnapshot.new(records[0].session_id, config.vocabularies)
    result = SessionResult(session)
    for record in records:
        if record.turn <= session.counter:
            continue
        try:
            session, response, trace = run_turn(session, record, config, backend, extractor, gen_log)
        except PamuError as exc:
            log.error("session %s aborted at turn %d: %s", record.session_id, record.turn, exc)
            result.error = exc
            break
        result.snapshot = session
        if trace is not None:
            result.traces.append(trace)
        if record.qa is not None:
            result.answers.append({
                "session_id": record.session_id,
                "turn": record.turn,
                "category": record.qa.category,
                "prediction": response,
                "reference": record.qa.answer,
            })
    return result


def _detection(sessions: dict[str, list[DialogueRecord]], results: dict[str, SessionResult],
               window: int):
    changes = {sid: [r.turn for r in recs if r.true_change] for sid, recs in sessions.items()}
    if not any(changes.values()):
        return None, None, None
    total_latency = 0.0
    hits = 0
    false_positives = 0
    misses = 0
    for sid, result in results.items():
        triggers = [t.turn for t in result.traces if t.triggered]
        stats = detection_stats(triggers, changes[sid], window)
        n_hits = len(changes[sid]) - stats.misses
        if stats.latency is not None:
            total_latency += stats.latency * n_hits
            hits += n_hits
        false_positives += stats.false_positives
        misses += stats.misses
    return (total_latency / hits if hits else None), false_positives, misses


def write_trace(traces: Sequence[TurnTrace], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TurnTrace.csv_header())
        for trace in traces:
            writer.writerow(trace.csv_row())


def write_answers(answers: Sequence[dict], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in answers:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def replay(dataset_path, config: PipelineConfig, backend: Backend, out_dir=None,
           extractor: Extractor | None = None, workers: int = 1) -> MetricReport:
    """Replay every session in `dataset_path` and score its QA records.

    With `out_dir`, writes ``report.json``, ``trace.csv``,
    ``responses.jsonl`` and one snapshot per session under ``snapshots/``.
    If any session aborts, the report is written as ``report.partial.json``
    and the first error is re-raised after everything is on disk.
    """
    records = load_jsonl(dataset_path)
    sessions = group_sessions(records)
    gen_log = GenerationLog()

    def job(sid):
        return sid, run_session(sessions[sid], config, backend, extractor, gen_log)

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        results = dict(pool.map(job, list(sessions)))

    traces = []
    answers = []
    for sid in sessions:
        traces.extend(results[sid].traces)
        answers.extend(results[sid].answers)
    report = MetricReport(config=config.to_dict(), traces=traces)
    for row in answers:
        report.add(row["prediction"], row["reference"], row["category"],
                   session_id=row["session_id"], turn=row["turn"])
    latency, fps, misses = _detection(sessions, results, config.effective_perception.window)
    report.detection_latency, report.false_positives, report.misses = latency, fps, misses

    errors = [results[sid].error for sid in sessions if results[sid].error is not None]
    if out_dir is not None:
        out = Path(out_dir)
        (out / "snapshots").mkdir(parents=True, exist_ok=True)
        report.write(out / ("report.partial.json" if errors else "report.json"))
        write_trace(traces, out / "trace.csv")
        write_answers(answers, out / "responses.jsonl")
        for sid in sessions:
            results[sid].snapshot.save(out / "snapshots" / f"{_safe(sid)}.json")
    if errors:
        raise errors[0]
    return report


def _safe(name: str) -> str:
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in name)


def score_responses(path) -> MetricReport:
    """Re-score a saved responses.jsonl without running any generation."""
    report = MetricReport()
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            row = json.loads(line)
            extra = {k: row[k] for k in ("session_id", "turn") if k in row}
            report.add(row["prediction"], row["reference"], row.get("category", "single_hop"), **extra)
    return report
