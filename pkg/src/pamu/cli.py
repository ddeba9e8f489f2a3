"""Command-line driver: replay, synth, inspect, score and demo."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import yaml

from pamu.errors import PamuError
from pamu.extraction import ExtractionConfig, HeuristicExtractor, RemoteExtractor, ScriptedExtractor
from pamu.generation import HttpBackend, MockBackend
from pamu.pipeline import ABLATIONS, AblationConfig, PipelineConfig, SessionSnapshot, run_turn
from pamu.records import DialogueRecord
from pamu.replay import replay, score_responses
from pamu.synth import load_specs, write_dataset
from pamu.types import CATEGORICAL_DIMENSIONS, PerceptionConfig

# config-file key -> PerceptionConfig field
PERCEPTION_KEYS = {
    "window": "window",
    "beta": "beta",
    "lambda": "lam",
    "lam": "lam",
    "delta": "delta",
    "epsilon": "epsilon",
    "lambda_mode": "lambda_mode",
    "update_mode": "update_mode",
    "kalman_p0": "kalman_p0",
    "kalman_r": "kalman_r",
    "kalman_q": "kalman_q",
    "kalman_gain": "kalman_gain",
    "variance_window": "variance_window",
}
ABLATION_KEYS = ("disable_sw", "disable_ema", "equal_fusion", "disable_detection",
                 "disable_prompt", "single_pref", "static_pref", "static_turns")
OTHER_KEYS = ("ablation", "backend_url", "model", "seed", "workers", "extractor",
              "extractor_endpoints", "history_turns", "max_tokens", "temperature",
              "gate_on_detection")


def load_config_file(path) -> dict:
    data = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
    if not isinstance(data, dict):
        raise SystemExit(f"{path}: expected a mapping of key: value pairs")
    known = set(PERCEPTION_KEYS) | set(ABLATION_KEYS) | set(OTHER_KEYS)
    unknown = sorted(set(data) - known)
    if unknown:
        raise SystemExit(f"{path}: unknown config keys {unknown}")
    return data


def _add_pipeline_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML file of flat key: value settings")
    p.add_argument("--window", type=int)
    p.add_argument("--beta", type=float)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--lambda-mode", choices=["fixed", "bayesian"])
    p.add_argument("--update-mode", choices=["sw_ema_fusion", "kalman"])
    p.add_argument("--kalman-gain", type=float)
    p.add_argument("--variance-window", type=int)
    p.add_argument("--ablation", choices=sorted(ABLATIONS))
    for flag in ("disable-sw", "disable-ema", "equal-fusion", "disable-detection",
                 "disable-prompt", "static-pref"):
        p.add_argument(f"--{flag}", action="store_true", default=None)
    p.add_argument("--single-pref")
    p.add_argument("--no-gate", dest="gate_on_detection", action="store_false", default=None,
                   help="rebuild the descriptor every turn instead of only on detected shifts")
    p.add_argument("--backend-url", help="HTTP completion endpoint; mock backend when omitted")
    p.add_argument("--model")
    p.add_argument("--max-tokens", type=int)
    p.add_argument("--temperature", type=float)
    p.add_argument("--extractor", choices=["heuristic", "scripted"])
    p.add_argument("--seed", type=int)


_NON_SETTINGS = {"config", "command", "func", "dataset", "out", "save", "verbose"}


def resolve_settings(args: argparse.Namespace) -> dict:
    """Config file values, overridden by any flag given on the command line."""
    settings = load_config_file(args.config) if getattr(args, "config", None) else {}
    for key, value in vars(args).items():
        if value is None or key in _NON_SETTINGS:
            continue
        settings["lambda" if key == "lam" else key] = value
    return settings


def build_pipeline(settings: dict) -> PipelineConfig:
    perception = {PERCEPTION_KEYS[k]: v for k, v in settings.items() if k in PERCEPTION_KEYS}
    ablation = ABLATIONS[settings.get("ablation", "full")]
    overrides = {k: settings[k] for k in ABLATION_KEYS if k in settings}
    if overrides:
        ablation = AblationConfig(**{**ablation.to_dict(), **overrides})
    extraction = ExtractionConfig()
    if "history_turns" in settings:
        extraction = replace(extraction, history_turns=int(settings["history_turns"]))
    kwargs = {k: settings[k] for k in ("model", "max_tokens", "temperature", "gate_on_detection")
              if k in settings}
    return PipelineConfig(perception=PerceptionConfig(**perception), extraction=extraction,
                          ablation=ablation, **kwargs)


def build_backend(settings: dict):
    url = settings.get("backend_url")
    if url:
        return HttpBackend(url, model=settings.get("model"))
    return MockBackend()


def build_extractor(settings: dict):
    endpoints = settings.get("extractor_endpoints")
    if endpoints:
        return RemoteExtractor(endpoints)
    if settings.get("extractor") == "scripted":
        return ScriptedExtractor()
    return HeuristicExtractor()


def cmd_replay(args) -> int:
    settings = resolve_settings(args)
    config = build_pipeline(settings)
    report = replay(args.dataset, config, build_backend(settings), out_dir=args.out,
                    extractor=build_extractor(settings), workers=int(settings.get("workers", 1)))
    summary = {"f1": report.f1, "bleu1": report.bleu1, "count": len(report.records),
               "by_category": report.by_category,
               "detection_latency": report.detection_latency,
               "false_positives": report.false_positives, "misses": report.misses}
    print(json.dumps(summary, sort_keys=True, indent=2))
    return 0


def cmd_synth(args) -> int:
    records = write_dataset(load_specs(args.spec), args.out, seed=args.seed)
    print(f"wrote {len(records)} records to {args.out}")
    return 0


def _fmt_vec(vec) -> str:
    if vec is None:
        return "-"
    return "[" + ", ".join(f"{x:.3f}" for x in vec) + "]"


def format_snapshot(snapshot: SessionSnapshot) -> str:
    lines = [f"session {snapshot.session_id}  turn counter {snapshot.counter}  tracker t={snapshot.tracker.t}"]
    lines.append("")
    lines.append("tracker:")
    for spec, dim in zip(snapshot.tracker.specs, snapshot.tracker.dims):
        sw = dim.sw_history[-1] if dim.sw_history else None
        label = f"  label={dim.label}" if spec.name in CATEGORICAL_DIMENSIONS else ""
        lines.append(f"  {spec.name:<10} sw={_fmt_vec(sw)}  ema={_fmt_vec(dim.ema)}  "
                     f"fused={_fmt_vec(dim.fused)}{label}")
    lines.append("")
    lines.append(f"current descriptor: {snapshot.descriptor if snapshot.descriptor else '-'}")
    lines.append("")
    lines.append("descriptor history:")
    for turn, desc in snapshot.descriptor_history:
        lines.append(f"  turn {turn:>3}: {desc or '-'}")
    lines.append("")
    lines.append("change events:")
    if not snapshot.change_events:
        lines.append("  none")
    for turn, dims in snapshot.change_events:
        lines.append(f"  turn {turn:>3}: {', '.join(dims)}")
    lines.append("")
    lines.append("history:")
    for record in snapshot.history:
        text = record.text if len(record.text) <= 70 else record.text[:67] + "..."
        lines.append(f"  {record.turn:>3} {record.speaker:<9} {text}")
    return "\n".join(lines)


def cmd_inspect(args) -> int:
    print(format_snapshot(SessionSnapshot.load(args.snapshot)))
    return 0


def cmd_score(args) -> int:
    report = score_responses(args.responses)
    if args.out:
        report.write(args.out)
    print(json.dumps({"f1": report.f1, "bleu1": report.bleu1, "count": len(report.records),
                      "by_category": report.by_category}, sort_keys=True, indent=2))
    return 0


def cmd_demo(args, stdin=None, stdout=None) -> int:
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    settings = resolve_settings(args)
    config = build_pipeline(settings)
    backend = build_backend(settings)
    extractor = build_extractor({**settings, "extractor": "heuristic"})
    session = SessionSnapshot.new("demo", config.vocabularies)
    stdout.write("type a message; empty line or EOF quits\n")
    turn = 0
    for line in stdin:
        text = line.rstrip("\n")
        if not text.strip():
            break
        turn += 1
        record = DialogueRecord("demo", turn, "user", text)
        try:
            session, response, trace = run_turn(session, record, config, backend, extractor)
        except PamuError as exc:
            stdout.write(f"error: {exc}\n")
            continue
        turn = session.counter
        flags = f"  shift: {', '.join(trace.triggered)}" if trace.triggered else ""
        stdout.write(f"[{trace.descriptor or 'no descriptor'}]{flags}\n{response}\n")
    if args.save:
        session.save(args.save)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pamu", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("replay", help="replay a JSONL dataset and write a metric report")
    p.add_argument("dataset")
    p.add_argument("--out", help="output directory for report, trace and snapshots")
    p.add_argument("--workers", type=int, help="sessions replayed concurrently")
    _add_pipeline_flags(p)
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("synth", help="generate a drift dataset from a spec file")
    p.add_argument("spec", help="JSON or YAML drift spec (object or list)")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, help="override every spec's seed")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("inspect", help="print a saved session snapshot")
    p.add_argument("snapshot")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("score", help="re-score a saved responses.jsonl")
    p.add_argument("responses")
    p.add_argument("--out", help="write the MetricReport JSON here")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("demo", help="interactive single-session loop")
    p.add_argument("--save", help="write the final snapshot here")
    _add_pipeline_flags(p)
    p.set_defaults(func=cmd_demo)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except PamuError as exc:
        print(f"pamu: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
