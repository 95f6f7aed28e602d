import json

import numpy as np
import pytest
import yaml
from click.testing import CliRunner

from rpl_racer.cli import main
from rpl_racer.synthetic import make_circle_track, write_track


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """Track assets plus a small training config shared by the CLI tests."""
    root = tmp_path_factory.mktemp("cli")
    write_track(make_circle_track(radius=8.0, width=5.0, resolution=0.1,
                                  speed=3.0), root / "tracks" / "circle")
    cfg = {
        "tracks": ["tracks/circle"],
        "seed": 5,
        "n_envs": 2,
        "checkpoint_interval": 1,
        "lidar": {"n_beams": 108},
        "ppo": {"rollout_steps": 8, "minibatch_size": 8,
                "update_epochs": 2, "total_steps": 32},
    }
    (root / "train.yaml").write_text(yaml.safe_dump(cfg))
    return root


@pytest.fixture(scope="module")
def trained(workdir):
    """Run the train command once; later tests reuse its checkpoint."""
    runner = CliRunner()
    out = workdir / "runs"
    res = runner.invoke(main, ["train", "--config",
                               str(workdir / "train.yaml"),
                               "--out", str(out)])
    assert res.exit_code == 0, res.output
    return out / "checkpoint_final.npz"


class TestTrain:
    def test_writes_metrics_and_checkpoints(self, workdir, trained):
        assert trained.is_file()
        lines = (workdir / "runs" / "metrics.jsonl").read_text().splitlines()
        assert len(lines) == 2          # 32 steps / (8 * 2 envs)
        rec = json.loads(lines[-1])
        assert rec["step"] == 32 and rec["update"] == 2
        assert "kl" in rec and "pg_loss" in rec
        # interval checkpoints on top of the final one
        assert (workdir / "runs" / "checkpoint_000001.npz").is_file()

    def test_missing_config_exits_1(self, tmp_path):
        res = CliRunner().invoke(main, ["train", "--config",
                                        str(tmp_path / "none.yaml")])
        assert res.exit_code == 1

    def test_config_with_missing_track_exits_2(self, tmp_path):
        (tmp_path / "bad.yaml").write_text(
            yaml.safe_dump({"tracks": ["nowhere"]}))
        res = CliRunner().invoke(main, ["train", "--config",
                                        str(tmp_path / "bad.yaml")])
        assert res.exit_code == 2

    def test_invalid_yaml_exits_1(self, tmp_path):
        (tmp_path / "broken.yaml").write_text("tracks: [::::")
        res = CliRunner().invoke(main, ["train", "--config",
                                        str(tmp_path / "broken.yaml")])
        assert res.exit_code == 1

    def test_resume_from_checkpoint(self, workdir, trained):
        res = CliRunner().invoke(main, [
            "train", "--config", str(workdir / "train.yaml"),
            "--out", str(workdir / "runs"), "--resume", str(trained)])
        assert res.exit_code == 0, res.output


class TestEval:
    def test_base_mode_writes_csv(self, workdir):
        out = workdir / "eval_base.csv"
        res = CliRunner().invoke(main, [
            "eval", "--tracks", str(workdir / "tracks" / "circle"),
            "--mode", "base", "--laps", "1", "--starts", "1",
            "--out", str(out)])
        assert res.exit_code == 0, res.output
        lines = out.read_text().splitlines()
        assert lines[0].startswith("track,laps_base,laps_rpl")
        row = lines[1].split(",")
        assert row[0] == "circle"
        assert int(row[1]) == 1          # one completed lap
        t_base = float(row[5])
        # lap time close to circumference / speed
        assert t_base == pytest.approx(2 * np.pi * 8.0 / 3.0, rel=0.05)

    def test_eval_deterministic(self, workdir):
        outs = []
        for name in ("a.csv", "b.csv"):
            out = workdir / name
            res = CliRunner().invoke(main, [
                "eval", "--tracks", str(workdir / "tracks" / "circle"),
                "--mode", "base", "--laps", "1", "--starts", "1",
                "--seed", "7", "--out", str(out)])
            assert res.exit_code == 0
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]

    def test_rpl_mode_with_checkpoint(self, workdir, trained):
        out = workdir / "eval_rpl.csv"
        res = CliRunner().invoke(main, [
            "eval", "--ckpt", str(trained),
            "--tracks", str(workdir / "tracks" / "circle"),
            "--mode", "rpl", "--laps", "1", "--starts", "1",
            "--out", str(out)])
        assert res.exit_code == 0, res.output
        row = out.read_text().splitlines()[1].split(",")
        assert row[5] != "" and row[6] != ""   # both medians present
        assert row[7] != "" and row[8] != ""   # diff + relative improvement

    def test_rpl_without_ckpt_exits_1(self, workdir):
        res = CliRunner().invoke(main, [
            "eval", "--tracks", str(workdir / "tracks" / "circle"),
            "--mode", "rpl", "--out", str(workdir / "x.csv")])
        assert res.exit_code == 1

    def test_unknown_track_exits_2(self, workdir):
        res = CliRunner().invoke(main, [
            "eval", "--tracks", str(workdir / "no-such-track"),
            "--out", str(workdir / "x.csv")])
        assert res.exit_code == 2

    def test_track_root_directory_expansion(self, workdir):
        out = workdir / "eval_root.csv"
        res = CliRunner().invoke(main, [
            "eval", "--tracks", str(workdir / "tracks"),
            "--mode", "base", "--laps", "1", "--starts", "1",
            "--out", str(out)])
        assert res.exit_code == 0, res.output
        assert "circle" in out.read_text()


class TestRecord:
    def test_base_record_decomposition(self, workdir):
        out = workdir / "traj_base.jsonl"
        res = CliRunner().invoke(main, [
            "record", "--track", str(workdir / "tracks" / "circle"),
            "--mode", "base", "--laps", "1", "--out", str(out)])
        assert res.exit_code == 0, res.output
        recs = [json.loads(l) for l in out.read_text().splitlines()]
        assert len(recs) > 100
        for r in recs[::50]:
            # base mode: zero residual, applied action equals base action
            assert r["a_residual"] == [0.0, 0.0]
            assert r["a_applied"] == r["a_base"]
            assert set(r) >= {"t", "x", "y", "delta", "v", "psi", "psi_dot",
                              "beta", "reward", "lap", "collision"}
        assert recs[0]["t"] == pytest.approx(0.01)
        assert recs[1]["t"] == pytest.approx(0.02)

    def test_rpl_record_composition(self, workdir, trained):
        out = workdir / "traj_rpl.jsonl"
        res = CliRunner().invoke(main, [
            "record", "--ckpt", str(trained),
            "--track", str(workdir / "tracks" / "circle"),
            "--mode", "rpl", "--laps", "1", "--out", str(out)])
        assert res.exit_code == 0, res.output
        recs = [json.loads(l) for l in out.read_text().splitlines()]
        for r in recs[::50]:
            want = [r["a_base"][0] + r["a_residual"][0],
                    r["a_base"][1] + r["a_residual"][1]]
            clamped = [max(-0.4189, min(0.4189, want[0])),
                       max(0.0, min(8.0, want[1]))]
            assert r["a_applied"][0] == pytest.approx(clamped[0], abs=1e-12)
            assert r["a_applied"][1] == pytest.approx(clamped[1], abs=1e-12)
            assert abs(r["a_residual"][0]) <= 0.05 + 1e-12
            assert abs(r["a_residual"][1]) <= 1.0 + 1e-12

    def test_lidar_stride(self, workdir):
        out = workdir / "traj_lidar.jsonl"
        res = CliRunner().invoke(main, [
            "record", "--track", str(workdir / "tracks" / "circle"),
            "--laps", "1", "--lidar-stride", "108", "--out", str(out)])
        assert res.exit_code == 0, res.output
        first = json.loads(out.read_text().splitlines()[0])
        assert len(first["lidar"]) == 10   # 1080 beams / 108


class TestSlipHist:
    def test_aggregates_records(self, workdir):
        # reuse the base trajectory written above
        traj = workdir / "traj_base.jsonl"
        out = workdir / "hist.json"
        res = CliRunner().invoke(main, [
            "slip-hist", "--in", str(traj), "--in", str(traj),
            "--bin", "0.01", "--out", str(out)])
        assert res.exit_code == 0, res.output
        h = json.loads(out.read_text())
        n_lines = len(traj.read_text().splitlines())
        assert h["n"] == 2 * n_lines
        assert sum(h["counts"]) == h["n"]
        assert h["bin_width"] == 0.01
        # left edges are aligned to the bin grid
        for e in h["bin_left_edges"]:
            assert round(e / 0.01) == pytest.approx(e / 0.01, abs=1e-9)

    def test_missing_input_exits_2(self, workdir):
        res = CliRunner().invoke(main, [
            "slip-hist", "--in", str(workdir / "nope.jsonl"),
            "--out", str(workdir / "h.json")])
        assert res.exit_code == 2

    def test_help_exits_0(self):
        res = CliRunner().invoke(main, ["--help"])
        assert res.exit_code == 0
        for cmd in ("train", "eval", "record", "slip-hist"):
            assert cmd in res.output
