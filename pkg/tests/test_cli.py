import json
import os

import pytest

from skysim import cli

TINY_DICT = {
    "area_side_m": 300.0, "num_ues": 4, "num_cuavs": 1, "num_iuavs": 1,
    "irs_elements": 2, "horizon_slots": 10,
    "ue_task": {"arrival_prob": 0.5},
    "energy": {"coverage_radius": 120.0},
    "learn": {"d_model": 16, "n_heads": 2, "n_blocks": 1, "context_len": 4,
              "ff_width": 32, "broadcast_interval": 1},
    "split_grid": 2, "seed": 0,
}


@pytest.fixture
def config_path(tmp_path):
    path = tmp_path / "tiny.json"
    path.write_text(json.dumps(TINY_DICT))
    return str(path)


def test_simulate_writes_manifest_and_csvs(config_path, tmp_path):
    out = str(tmp_path / "run")
    rc = cli.main(["simulate", "--config", config_path, "--episodes", "2",
                   "--seed", "42", "--out", out])
    assert rc == 0
    manifest = json.loads((tmp_path / "run" / "manifest.json").read_text())
    assert manifest["status"] == "ok"
    assert manifest["seed"] == 42
    metrics = (tmp_path / "run" / "metrics.csv").read_text().splitlines()
    assert metrics[0] == "episode,chi,Q,mean_secrecy,energy_violations"
    assert len(metrics) == 3
    traj = (tmp_path / "run" / "trajectory.csv").read_text().splitlines()
    assert traj[0] == "slot,uav_id,x,y,z,energy"
    # 10 slots x 2 UAVs for the final episode
    assert len(traj) == 1 + 10 * 2


def test_simulate_byte_identical_across_runs(config_path, tmp_path):
    outs = []
    for name in ("a", "b"):
        out = str(tmp_path / name)
        assert cli.main(["simulate", "--config", config_path, "--episodes", "3",
                         "--seed", "42", "--out", out]) == 0
        outs.append((tmp_path / name / "metrics.csv").read_bytes())
    assert outs[0] == outs[1]


def test_simulate_zero_episodes_header_only(config_path, tmp_path):
    out = str(tmp_path / "zero")
    assert cli.main(["simulate", "--config", config_path, "--episodes", "0",
                     "--out", out]) == 0
    lines = (tmp_path / "zero" / "metrics.csv").read_text().splitlines()
    assert lines == ["episode,chi,Q,mean_secrecy,energy_violations"]


def test_config_error_exit_code(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"num_ues": 0}))
    rc = cli.main(["simulate", "--config", str(bad), "--out", str(tmp_path / "o")])
    assert rc == 2
    bad.write_text(json.dumps({"frobnicate": 1}))
    assert cli.main(["simulate", "--config", str(bad),
                     "--out", str(tmp_path / "o2")]) == 2


def test_train_then_evaluate_roundtrip(config_path, tmp_path):
    train_out = str(tmp_path / "train")
    rc = cli.main(["train", "--config", config_path, "--episodes", "2", "--sync",
                   "--seed", "1", "--out", train_out])
    assert rc == 0
    training = (tmp_path / "train" / "training.csv").read_text().splitlines()
    assert training[0] == "update,version,L_policy,L_value,mean_return,buffers_dropped"
    assert len(training) == 3
    ckpt = os.path.join(train_out, "checkpoint")
    rc = cli.main(["evaluate", "--config", config_path, "--episodes", "1",
                   "--checkpoint", ckpt, "--seed", "5",
                   "--out", str(tmp_path / "eval")])
    assert rc == 0
    assert (tmp_path / "eval" / "metrics.csv").exists()


def test_checkpoint_config_mismatch_refused(config_path, tmp_path):
    train_out = str(tmp_path / "train")
    assert cli.main(["train", "--config", config_path, "--episodes", "1", "--sync",
                     "--out", train_out]) == 0
    other = dict(TINY_DICT)
    other["num_ues"] = 3
    other_path = tmp_path / "other.json"
    other_path.write_text(json.dumps(other))
    rc = cli.main(["evaluate", "--config", str(other_path), "--episodes", "1",
                   "--checkpoint", os.path.join(train_out, "checkpoint"),
                   "--out", str(tmp_path / "eval")])
    assert rc == 2


def test_train_async_workers(config_path, tmp_path):
    rc = cli.main(["train", "--config", config_path, "--episodes", "2",
                   "--workers", "2", "--out", str(tmp_path / "async")])
    assert rc == 0
    lines = (tmp_path / "async" / "training.csv").read_text().splitlines()
    assert len(lines) == 3


def test_skysim_out_env_var(config_path, tmp_path, monkeypatch):
    monkeypatch.setenv("SKYSIM_OUT", str(tmp_path / "envout"))
    monkeypatch.chdir(tmp_path)
    assert cli.main(["simulate", "--config", config_path, "--episodes", "1"]) == 0
    assert (tmp_path / "envout" / "metrics.csv").exists()


def test_plot_outputs_images(config_path, tmp_path):
    out = str(tmp_path / "run")
    cli.main(["simulate", "--config", config_path, "--episodes", "2", "--out", out])
    rc = cli.main(["plot", os.path.join(out, "metrics.csv"),
                   os.path.join(out, "trajectory.csv"),
                   "--out", str(tmp_path / "plots")])
    assert rc == 0
    assert (tmp_path / "plots" / "metrics.png").exists()
    assert (tmp_path / "plots" / "trajectory.png").exists()


def test_plot_rejects_unknown_schema(tmp_path):
    bad = tmp_path / "weird.csv"
    bad.write_text("a,b,c\n1,2,3\n")
    rc = cli.main(["plot", str(bad), "--out", str(tmp_path / "plots")])
    assert rc == 3


def test_sweep_writes_aggregate(config_path, tmp_path):
    out = str(tmp_path / "sweep")
    rc = cli.main(["sweep", "--config", config_path, "--axis", "num_cuavs",
                   "--values", "1,2", "--seeds", "0", "--episodes", "1",
                   "--out", out])
    assert rc == 0
    lines = (tmp_path / "sweep" / "sweep.csv").read_text().splitlines()
    assert lines[0] == "axis,value,seed,mean_chi,mean_q,mean_secrecy"
    assert len(lines) == 3


def test_sweep_rejects_unknown_axis(config_path, tmp_path):
    rc = cli.main(["sweep", "--config", config_path, "--axis", "num_ues",
                   "--values", "1", "--out", str(tmp_path / "s")])
    assert rc == 2
