"""Command-line surface: JSON results on stdout, single-line JSON errors on
stderr with nonzero exit, seed resolution order, and reproducible runs."""

from __future__ import annotations

import json

import pytest

from helpers import level_from_rows
from uedlab.cli import main
from uedlab.config import smoke_config
from uedlab.levelgen import serialize_level


@pytest.fixture()
def tiny_cfg_path(tmp_path):
    cfg = smoke_config(method="DR", family="minigrid", num_updates=1, num_envs=4)
    cfg.student.num_steps = 8
    cfg.student.hidden_dim = 8
    cfg.student.minibatches = 2
    cfg.student.epochs = 1
    cfg.env.size = 5
    cfg.env.wall_count = [0, 2]
    cfg.env.t_max = 10
    cfg.eval.every = 1
    cfg.eval.episodes_per_level = 1
    cfg.eval.greedy = True
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg.to_dict()))
    return path


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_train_writes_outputs(tiny_cfg_path, tmp_path, capsys):
    out_dir = tmp_path / "run"
    code, out, err = run_cli(capsys, "train", "--config", str(tiny_cfg_path),
                             "--out", str(out_dir))
    assert code == 0 and err == ""
    payload = json.loads(out)
    assert payload["updates"] == 1
    assert (out_dir / "metrics.csv").exists()
    assert (out_dir / "student.ckpt.npz").exists()


def test_train_seed_priority(tiny_cfg_path, tmp_path, capsys, monkeypatch):
    # --seed beats the environment variable beats the config value
    monkeypatch.setenv("DEGEN_SEED", "77")
    code, out, _ = run_cli(capsys, "train", "--config", str(tiny_cfg_path),
                           "--out", str(tmp_path / "a"), "--seed", "5")
    assert code == 0
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["seed"] == 5

    code, _, _ = run_cli(capsys, "train", "--config", str(tiny_cfg_path),
                         "--out", str(tmp_path / "b"))
    assert code == 0
    manifest = json.loads((tmp_path / "b" / "manifest.json").read_text())
    assert manifest["seed"] == 77

    monkeypatch.delenv("DEGEN_SEED")
    code, _, _ = run_cli(capsys, "train", "--config", str(tiny_cfg_path),
                         "--out", str(tmp_path / "c"))
    assert code == 0
    manifest = json.loads((tmp_path / "c" / "manifest.json").read_text())
    assert manifest["seed"] == 0


def test_train_threads_flag(tiny_cfg_path, tmp_path, capsys):
    code, _, _ = run_cli(capsys, "train", "--config", str(tiny_cfg_path),
                         "--out", str(tmp_path / "run"), "--threads", "2")
    assert code == 0
    manifest = json.loads((tmp_path / "run" / "manifest.json").read_text())
    assert manifest["config"]["threads"] == 2


def test_identical_train_runs_byte_equal_csv(tiny_cfg_path, tmp_path, capsys):
    for name in ("a", "b"):
        code, _, _ = run_cli(capsys, "train", "--config", str(tiny_cfg_path),
                             "--out", str(tmp_path / name))
        assert code == 0
    assert (tmp_path / "a" / "metrics.csv").read_bytes() == \
        (tmp_path / "b" / "metrics.csv").read_bytes()


def test_error_path_is_single_line_json(tmp_path, capsys):
    bad_cfg = tmp_path / "bad.json"
    bad_cfg.write_text(json.dumps({"method": "NotAMethod"}))
    code, out, err = run_cli(capsys, "train", "--config", str(bad_cfg),
                             "--out", str(tmp_path / "run"))
    assert code == 1 and out == ""
    lines = err.strip().splitlines()
    assert len(lines) == 1
    payload = json.loads(lines[0])
    assert payload["error"] == "ConfigError"
    assert "NotAMethod" in payload["message"]


def test_missing_file_reports_oserror(tmp_path, capsys):
    code, out, err = run_cli(capsys, "solvable", "--level",
                             str(tmp_path / "absent.txt"))
    assert code == 1
    payload = json.loads(err.strip())
    assert payload["error"] == "FileNotFoundError"


def test_solvable_command(tmp_path, capsys):
    open_level = tmp_path / "open.txt"
    open_level.write_text(serialize_level(
        level_from_rows(["#####", "#>.G#", "#####"], t_max=8)))
    code, out, _ = run_cli(capsys, "solvable", "--level", str(open_level))
    assert code == 0
    payload = json.loads(out)
    assert payload["solvable"] is True and len(payload["level_hash"]) == 64

    blocked = tmp_path / "blocked.txt"
    blocked.write_text(serialize_level(
        level_from_rows(["#####", "#>#G#", "#####"], t_max=8)))
    code, out, _ = run_cli(capsys, "solvable", "--level", str(blocked))
    assert code == 0
    assert json.loads(out)["solvable"] is False


def test_solvable_rejects_sokoban(tmp_path, capsys):
    level = tmp_path / "soko.txt"
    level.write_text(serialize_level(
        level_from_rows(["#####", "#>BS#", "#####"], family="sokoban", t_max=8)))
    code, _, err = run_cli(capsys, "solvable", "--level", str(level))
    assert code == 1
    payload = json.loads(err.strip())
    assert payload["error"] == "UedError"
    assert "minigrid" in payload["message"]


def test_eval_and_score_on_trained_checkpoint(tiny_cfg_path, tmp_path, capsys):
    run_cli(capsys, "train", "--config", str(tiny_cfg_path),
            "--out", str(tmp_path / "run"))
    ckpt = tmp_path / "run" / "student.ckpt.npz"

    levels_dir = tmp_path / "levels"
    levels_dir.mkdir()
    (levels_dir / "corridor.txt").write_text(serialize_level(
        level_from_rows(["#####", "#>.G#", "#####"], t_max=8)))
    (levels_dir / "manifest.json").write_text(
        json.dumps([{"name": "Corridor", "path": "corridor.txt"}]))

    code, out, _ = run_cli(capsys, "eval", "--checkpoint", str(ckpt),
                           "--levels", str(levels_dir), "--episodes", "2",
                           "--seed", "1")
    assert code == 0
    payload = json.loads(out)
    assert payload["checkpoint_updates"] == 1
    names = [row["level_name"] for row in payload["levels"]]
    assert names == ["Corridor", "__mean__"]
    for row in payload["levels"]:
        assert 0.0 <= row["solve_rate"] <= 1.0

    code, out, _ = run_cli(capsys, "score", "--checkpoint", str(ckpt),
                           "--level", str(levels_dir / "corridor.txt"),
                           "--metric", "MNA", "--episodes", "2", "--seed", "3")
    assert code == 0
    payload = json.loads(out)
    assert payload["episodes"] == 2 and payload["metric"] == "MNA"
    assert payload["score"] >= 0.0
    assert 0.0 <= payload["solve_rate"] <= 1.0

    # same invocation, same numbers
    code, out2, _ = run_cli(capsys, "score", "--checkpoint", str(ckpt),
                            "--level", str(levels_dir / "corridor.txt"),
                            "--metric", "MNA", "--episodes", "2", "--seed", "3")
    assert json.loads(out2) == payload


def test_score_rejects_unknown_metric(tmp_path, capsys):
    with pytest.raises(SystemExit):
        main(["score", "--checkpoint", "x", "--level", "y",
              "--metric", "NotAMetric"])
