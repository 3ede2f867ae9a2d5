from __future__ import annotations

import csv
import hashlib
import json
import subprocess
import sys
from pathlib import Path

import pytest

from crashscore.cli import COMMANDS, main


def _run(*argv) -> int:
    return main([str(a) for a in argv])


def _digest(path: Path) -> dict[str, str]:
    return {str(p.relative_to(path)): hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(path.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    fx, tr = root / "fixture", root / "train"
    assert _run("fixture", "--seed", 1, "--out", fx, "--n-crashes", 600, "--n-per-type", 5) == 0
    assert _run("train", "--seed", 1, "--out", tr, "--data", fx / "crashes.csv", "--n-estimators", 10) == 0
    return root, fx, tr / "model.json"


def test_fixture_outputs(workspace):
    _, fx, _ = workspace
    for name in ("crashes.csv", "trajectories.csv", "trajectory_meta.csv", "fixture.json", "fixture.manifest.json"):
        assert (fx / name).is_file()
    with open(fx / "crashes.csv") as f:
        assert sum(1 for _ in f) == 601


def test_train_then_evaluate(workspace):
    root, fx, model = workspace
    out = root / "evaluate"
    assert _run("evaluate", "--seed", 1, "--out", out, "--data", fx / "crashes.csv", "--model", model) == 0
    report = json.loads((out / "metrics.json").read_text())
    assert 0.5 < report["auc"] <= 1.0 and report["n_test"] > 0
    assert (out / "pr_curve.csv").is_file() and (out / "roc_curve.csv").is_file()


def test_grid_has_864_rows(workspace):
    root, _, model = workspace
    out = root / "grid"
    assert _run("grid", "--out", out, "--model", model) == 0
    with open(out / "grid.csv") as f:
        rows = list(csv.reader(f))
    assert len(rows) == 865
    assert json.loads((out / "grid.json").read_text())["summary"]["cells"] == 864


@pytest.mark.parametrize(
    "command,args",
    [
        ("grid", ["--model", "{model}"]),
        ("score", ["--data", "{data}", "--model", "{model}"]),
        ("synth", ["--seed", 3, "--data", "{data}"]),
        ("explain", ["--seed", 3, "--data", "{data}", "--model", "{model}", "--n-explain", 3, "--permutation-rows", 200, "--shap-rows", 20, "--background-size", 100]),
        ("validate", ["--model", "{model}", "--trajectories", "{traj}", "--trajectory-meta", "{meta}"]),
        ("cluster", ["--seed", 3, "--data", "{data}"]),
    ],
)
def test_same_config_gives_identical_reports(workspace, command, args):
    root, fx, model = workspace
    subst = {"{model}": model, "{data}": fx / "crashes.csv", "{traj}": fx / "trajectories.csv", "{meta}": fx / "trajectory_meta.csv"}
    argv = [subst.get(a, a) if isinstance(a, str) else a for a in args]
    a, b = root / f"{command}-a", root / f"{command}-b"
    assert _run(command, "--out", a, *argv) == 0
    assert _run(command, "--out", b, *argv) == 0
    da, db = _digest(a), _digest(b)
    assert da == db and len(da) >= 2
    manifest = json.loads((a / f"{command}.manifest.json").read_text())
    assert manifest["config_hash"] and set(manifest["outputs"]) == set(da) - {f"{command}.manifest.json"}


def test_manifest_records_seed_and_inputs(workspace):
    root, fx, _ = workspace
    out = root / "synth-m"
    assert _run("synth", "--seed", 42, "--out", out, "--data", fx / "crashes.csv") == 0
    m = json.loads((out / "synth.manifest.json").read_text())
    assert m["seed"] == 42 and m["command"] == "synth"
    assert m["inputs"]["data"]["sha256"] == hashlib.sha256((fx / "crashes.csv").read_bytes()).hexdigest()


def test_commands_do_not_mutate_inputs(workspace):
    root, fx, model = workspace
    before = _digest(fx) | {"model": hashlib.sha256(model.read_bytes()).hexdigest()}
    assert _run("score", "--out", root / "score-m", "--data", fx / "crashes.csv", "--model", model) == 0
    assert _run("multipliers", "--seed", 2, "--out", root / "mult-m", "--data", fx / "crashes.csv") == 0
    after = _digest(fx) | {"model": hashlib.sha256(model.read_bytes()).hexdigest()}
    assert before == after


def test_config_file_overrides_flags(workspace, tmp_path):
    _, fx, _ = workspace
    cfg = tmp_path / "train.json"
    cfg.write_text(json.dumps({"n_estimators": 4, "seed": 5}))
    out = tmp_path / "t"
    assert _run("train", "--config", cfg, "--seed", 1, "--out", out, "--data", fx / "crashes.csv", "--n-estimators", 2) == 0
    model = json.loads((out / "model.json").read_text())
    assert len(model["trees"]) == 4
    assert json.loads((out / "train.manifest.json").read_text())["seed"] == 5


def test_flags_override_defaults(workspace, tmp_path):
    _, fx, _ = workspace
    assert _run("train", "--seed", 1, "--out", tmp_path, "--data", fx / "crashes.csv", "--n-estimators", 3) == 0
    assert len(json.loads((tmp_path / "model.json").read_text())["trees"]) == 3


# ---------------------------------------------------------------------------
# exit codes
# ---------------------------------------------------------------------------


def test_missing_seed_is_config_error(workspace, tmp_path):
    _, fx, _ = workspace
    assert _run("train", "--out", tmp_path / "x", "--data", fx / "crashes.csv") == 2


def test_missing_file_is_config_error(tmp_path):
    assert _run("grid", "--out", tmp_path / "x", "--model", tmp_path / "nope.json") == 2


def test_missing_out_is_config_error(workspace):
    _, _, model = workspace
    assert _run("grid", "--model", model) == 2


def test_unknown_config_key_is_config_error(workspace, tmp_path):
    _, _, model = workspace
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"bogus": 1}))
    assert _run("grid", "--config", cfg, "--out", tmp_path / "x", "--model", model) == 2


def test_bad_data_is_data_error(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("CASENUM,HOUR\n1,not-an-hour\n")
    assert _run("ingest", "--out", tmp_path / "x", "--data", bad) == 3


def test_truncated_model_is_data_error(workspace, tmp_path):
    _, _, model = workspace
    cut = tmp_path / "cut.json"
    text = model.read_text()
    cut.write_text(text[: len(text) // 3])
    assert _run("grid", "--out", tmp_path / "x", "--model", cut) == 3


def test_runtime_error_and_cleanup(workspace, tmp_path):
    _, fx, _ = workspace
    out = tmp_path / "cl"
    assert _run("cluster", "--seed", 1, "--out", out, "--data", fx / "crashes.csv", "--k", 100000) == 4
    assert list(out.iterdir()) == []  # staging removed, nothing committed


def test_usage_error_exits_2():
    with pytest.raises(SystemExit) as exc:
        main(["no-such-command"])
    assert exc.value.code == 2


def test_every_command_has_help():
    for name in COMMANDS:
        with pytest.raises(SystemExit) as exc:
            main([name, "--help"])
        assert exc.value.code == 0


def test_console_entry_point(workspace, tmp_path):
    _, _, model = workspace
    proc = subprocess.run([sys.executable, "-m", "crashscore.cli", "grid", "--out", str(tmp_path), "--model", str(model)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "grid.csv").is_file()
