import io
import json

import pytest

from pamu import cli, data_path
from pamu.errors import InvalidSpec
from pamu.records import load_jsonl
from pamu.synth import synth_drift, write_dataset

STEP = {"session_id": "step", "turns": 40, "seed": 1, "noise": 0.0,
        "dimensions": {"formality": {"knots": [[1, 0.1], [20, 0.9]]}}}
RAMP = {"session_id": "ramp", "turns": 40, "seed": 1, "noise": 0.0,
        "dimensions": {"density": {"knots": [[10, 0.2], [30, 0.8]], "interp": "linear"}}}


def test_step_jumps_at_knot():
    recs = synth_drift(STEP)
    values = [r.annotations.formality for r in recs]
    assert values[:19] == [0.1] * 19 and values[19:] == [0.9] * 21
    assert [r.turn for r in recs if r.true_change] == [20]
    assert recs[19].true_change == ("formality",)
    assert all(r.signals.complete for r in recs)


def test_ramp_is_monotone():
    values = [r.annotations.density for r in synth_drift(RAMP)]
    assert all(a <= b for a, b in zip(values, values[1:]))
    assert values[9] == pytest.approx(0.2) and values[29] == pytest.approx(0.8)
    assert values[19] == pytest.approx(0.5)
    assert [r.turn for r in synth_drift(RAMP) if r.true_change] == [11]


def test_categorical_trajectory():
    spec = {"turns": 6, "dimensions": {"tone": {"knots": [[1, "humorous"], [4, "serious"]], "confidence": 0.8}}}
    recs = synth_drift(spec)
    assert [r.annotations.tone["label"] for r in recs] == ["humorous"] * 3 + ["serious"] * 3
    assert recs[3].true_change == ("tone",)


def test_fixed_seed_is_byte_identical(tmp_path):
    spec = {**STEP, "noise": 0.05}
    write_dataset([spec, RAMP], tmp_path / "a.jsonl")
    write_dataset([spec, RAMP], tmp_path / "b.jsonl")
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()
    write_dataset([spec], tmp_path / "c.jsonl", seed=2)
    assert (tmp_path / "a.jsonl").read_bytes() != (tmp_path / "c.jsonl").read_bytes()


@pytest.mark.parametrize("spec", [
    {"turns": 0},
    {"noise": -1},
    {"colour": "red"},
    {"dimensions": {"mood": {"knots": [[1, 0.5]]}}},
    {"dimensions": {"density": {"knots": [[1, 1.5]]}}},
    {"dimensions": {"density": {"knots": [[5, 0.1], [3, 0.2]]}}},
    {"dimensions": {"density": {"knots": [[1, 0.1]], "interp": "cubic"}}},
    {"dimensions": {"tone": {"knots": [[1, "sarcastic"]]}}},
    {"turns": 5, "dimensions": {"density": {"knots": [[9, 0.1]]}}},
])
def test_invalid_specs(spec):
    with pytest.raises(InvalidSpec):
        synth_drift(spec)


def test_cli_synth_and_replay(tmp_path, capsys):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps([STEP]))
    out = tmp_path / "d.jsonl"
    assert cli.main(["synth", str(spec), "--out", str(out)]) == 0
    assert len(load_jsonl(out)) == 40
    assert cli.main(["replay", str(out), "--out", str(tmp_path / "r"), "--extractor", "scripted"]) == 0
    summary = json.loads(capsys.readouterr().out.split("\n", 1)[1])
    assert summary["misses"] == 0
    assert (tmp_path / "r" / "trace.csv").exists()


def test_cli_config_file_and_overrides(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("window: 3\nbeta: 0.8\nlambda: 0.2\nablation: no_prompt\n")
    args = cli.build_parser().parse_args(["replay", "x.jsonl", "--config", str(cfg), "--beta", "0.7"])
    config = cli.build_pipeline(cli.resolve_settings(args))
    assert config.perception.window == 3
    assert config.perception.beta == 0.7
    assert config.perception.lam == 0.2
    assert config.ablation.disable_prompt


def test_cli_rejects_unknown_config_key(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("windw: 3\n")
    with pytest.raises(SystemExit):
        cli.load_config_file(cfg)


def test_cli_inspect_and_score(tmp_path, capsys):
    assert cli.main(["replay", str(data_path("style_shift.jsonl")), "--out", str(tmp_path), "--extractor", "scripted"]) == 0
    capsys.readouterr()
    assert cli.main(["inspect", str(tmp_path / "snapshots" / "style_shift.json")]) == 0
    text = capsys.readouterr().out
    assert "session style_shift" in text and "change events:" in text and "Tone: humorous" in text
    assert cli.main(["replay", str(data_path("sessions.jsonl")), "--out", str(tmp_path / "s")]) == 0
    capsys.readouterr()
    assert cli.main(["score", str(tmp_path / "s" / "responses.jsonl"), "--out", str(tmp_path / "rs.json")]) == 0
    assert json.loads(capsys.readouterr().out)["count"] == 7


def test_cli_reports_pamu_errors(tmp_path, capsys):
    bad = tmp_path / "bad.jsonl"
    bad.write_text("{}\n")
    assert cli.main(["replay", str(bad)]) == 1
    assert "ParseError" in capsys.readouterr().err


def test_demo_loop(tmp_path):
    args = cli.build_parser().parse_args(["demo", "--save", str(tmp_path / "snap.json")])
    out = io.StringIO()
    cli.cmd_demo(args, stdin=io.StringIO("haha tell me a joke\nPlease explain entropy.\n\n"), stdout=out)
    lines = out.getvalue().splitlines()
    assert lines[1].startswith("[[Tone: humorous")
    assert "Please explain entropy." in lines
    assert (tmp_path / "snap.json").exists()
