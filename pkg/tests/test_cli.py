import json
import os

import numpy as np
import pytest

import snctrl as sc
from snctrl.cli import main, parse_grid, validate_run_config
from snctrl import ContractError
from conftest import random_policy
from test_certify_post import make_frontier_instance


def run_cli(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_gain_gtm(capsys):
    code, out, _ = run_cli(capsys, "gain", "--env", "gtm")
    assert code == 0
    payload = json.loads(out)
    assert payload["kind"] == "finite"
    assert abs(payload["gain"] - 30.8) <= 0.2


def test_gain_pendulum_unbounded(capsys):
    code, out, _ = run_cli(capsys, "gain", "--env", "pendulum")
    assert code == 0
    payload = json.loads(out)
    assert payload["kind"] == "unbounded"
    assert abs(payload["spectral_radius"] - 1.381) < 1e-3


def test_gain_missing_plant_file(capsys):
    code, _, err = run_cli(capsys, "gain", "--plant", "/nonexistent/p.json")
    assert code == 2
    assert "error" in err


def test_gain_needs_env_or_plant(capsys):
    code, _, err = run_cli(capsys, "gain")
    assert code == 2


def test_gain_from_plant_file(capsys, tmp_path):
    env = sc.make_gtm()
    path = tmp_path / "gtm.json"
    sc.save_plant(env.plant, path)
    code, out, _ = run_cli(capsys, "gain", "--plant", str(path))
    assert code == 0
    assert json.loads(out)["kind"] == "finite"


def test_certify_pre_cli(capsys, tmp_path, rng):
    pol = random_policy(rng, [4, 16, 16, 1], mode="pre", deltas=0.31)
    path = tmp_path / "pol.json"
    sc.save_policy(pol, path)
    code, out, _ = run_cli(capsys, "certify-pre", "--env", "gtm",
                           "--policy", str(path))
    assert code == 0
    payload = json.loads(out)
    assert payload["certified"]
    assert 0.90 <= payload["product"] <= 0.93

    pol_bad = random_policy(rng, [4, 16, 16, 1], mode="pre", deltas=0.33)
    sc.save_policy(pol_bad, path)
    code, out, _ = run_cli(capsys, "certify-pre", "--env", "gtm",
                           "--policy", str(path))
    assert code == 3
    assert not json.loads(out)["certified"]


def test_certify_post_cli_and_roa_grid(capsys, tmp_path):
    plant, pol = make_frontier_instance(seed=0, out_scale=2.0)
    ppath = tmp_path / "plant.json"
    polpath = tmp_path / "pol.json"
    sc.save_plant(plant, ppath)
    sc.save_policy(pol, polpath)
    out_dir = tmp_path / "run"
    code, out, _ = run_cli(capsys, "certify-post", "--plant", str(ppath),
                           "--policy", str(polpath), "--mu-max", "8.0",
                           "--out", str(out_dir))
    assert code == 0
    payload = json.loads(out)
    assert payload["feasible"]
    assert payload["volume_proxy"] > 0
    assert (out_dir / "certificate.json").exists()
    assert (out_dir / "frontier.csv").exists()

    code, out, _ = run_cli(
        capsys, "roa-grid", "--plant", str(ppath), "--policy", str(polpath),
        "--grid", "x0:-3:3:15,x1:-3:3:15",
        "--cert", str(out_dir / "certificate.json"), "--out", str(out_dir))
    assert code == 0
    summary = json.loads(out)
    assert summary["audit"]["sound"]
    assert (out_dir / "roa_grid.csv").exists()
    assert (out_dir / "ellipse_boundary.csv").exists()


def test_certify_post_accepts_pre_mode_policy(capsys, tmp_path, rng):
    # pre-mode weights are a valid special case; the report carries a note
    plant, _ = make_frontier_instance(seed=0)
    pol = random_policy(rng, [2, 6, 1], mode="pre", deltas=(0.3, 0.3))
    ppath = tmp_path / "plant.json"
    polpath = tmp_path / "pol.json"
    sc.save_plant(plant, ppath)
    sc.save_policy(pol, polpath)
    code, out, _ = run_cli(capsys, "certify-post", "--plant", str(ppath),
                           "--policy", str(polpath), "--mu-max", "2.0")
    assert code == 0
    payload = json.loads(out)
    assert payload["feasible"]
    assert "pre-mode" in payload["note"]


def test_certify_post_infeasible_exit_code(capsys, tmp_path):
    plant, pol = make_frontier_instance(seed=2)  # unstable linearized loop
    ppath = tmp_path / "plant.json"
    polpath = tmp_path / "pol.json"
    sc.save_plant(plant, ppath)
    sc.save_policy(pol, polpath)
    code, out, _ = run_cli(capsys, "certify-post", "--plant", str(ppath),
                           "--policy", str(polpath))
    assert code == 3
    assert not json.loads(out)["feasible"]


def test_simulate_cli_row_cap(capsys, tmp_path, rng):
    pol = random_policy(rng, [2, 8, 1], mode="post", deltas=1.0)
    polpath = tmp_path / "pol.json"
    sc.save_policy(pol, polpath)
    out_dir = tmp_path / "sim"
    code, out, _ = run_cli(capsys, "simulate", "--env", "pendulum",
                           "--policy", str(polpath),
                           "--x0", f"{np.pi},0", "--out", str(out_dir))
    assert code == 0
    rows = [l for l in (out_dir / "trajectory.csv").read_text().splitlines()
            if l and not l.startswith("#")]
    assert len(rows) - 1 <= 200  # header + at most max_episode_steps rows


def test_train_cli_deterministic_rerun(capsys, tmp_path):
    config = {
        "env": "pendulum",
        "arch": [4, 4],
        "mode": "post",
        "deltas": 1.0,
        "seeds": [0, 1],
        "ppo": {"total_steps": 512, "rollout_length": 256,
                "epochs_per_update": 2, "value_hidden": [8, 8]},
    }
    cpath = tmp_path / "cfg.json"
    cpath.write_text(json.dumps(config))
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    assert run_cli(capsys, "train", "--config", str(cpath),
                   "--out", str(out_a))[0] == 0
    assert run_cli(capsys, "train", "--config", str(cpath),
                   "--out", str(out_b))[0] == 0
    for name in ("curve.csv", "curve_seed0.csv", "policy_seed0.json",
                 "policy_seed1.json", "manifest.json"):
        assert (out_a / name).read_bytes() == (out_b / name).read_bytes()
    manifest = json.loads((out_a / "manifest.json").read_text())
    chash = manifest["config_hash"]
    assert f"# config_hash={chash}" in (out_a / "curve.csv").read_text()


def test_train_cli_rejects_unknown_env(capsys, tmp_path):
    cpath = tmp_path / "cfg.json"
    cpath.write_text(json.dumps({"env": "lander", "arch": [4], "mode": "post"}))
    code, _, err = run_cli(capsys, "train", "--config", str(cpath))
    assert code == 2
    assert "pendulum" in err and "gtm" in err


def test_validate_run_config_rejects_unknown_fields():
    with pytest.raises(ContractError, match="unknown config fields"):
        validate_run_config({"env": "pendulum", "arch": [4], "mode": "post",
                             "swag": 1})
    with pytest.raises(ContractError, match="unknown ppo"):
        validate_run_config({"env": "pendulum", "arch": [4], "mode": "post",
                             "ppo": {"lr": 1e-3}})
    with pytest.raises(ContractError, match="missing required"):
        validate_run_config({"env": "pendulum", "arch": [4]})


def test_parse_grid():
    grid = parse_grid("theta:-3:3:61,omega:-2:2:41")
    assert grid.names == ("theta", "omega")
    assert grid.points().shape == (61 * 41, 2)
    with pytest.raises(ContractError):
        parse_grid("x:-3:3")


def test_report_renders_panels(capsys, tmp_path):
    plant, pol = make_frontier_instance(seed=0, out_scale=2.0)
    ppath = tmp_path / "plant.json"
    polpath = tmp_path / "policy_seed0.json"
    out_dir = tmp_path / "run"
    os.makedirs(out_dir)
    sc.save_plant(plant, ppath)
    sc.save_policy(pol, out_dir / "policy_seed0.json")
    # produce artifacts with prior commands
    run_cli(capsys, "certify-post", "--plant", str(ppath), "--policy",
            str(out_dir / "policy_seed0.json"), "--mu-max", "8.0",
            "--out", str(out_dir))
    run_cli(capsys, "roa-grid", "--plant", str(ppath), "--policy",
            str(out_dir / "policy_seed0.json"), "--grid", "x0:-3:3:11,x1:-3:3:11",
            "--cert", str(out_dir / "certificate.json"), "--out", str(out_dir))
    run_cli(capsys, "simulate", "--plant", str(ppath), "--policy",
            str(out_dir / "policy_seed0.json"), "--x0", "0.1,0.1",
            "--out", str(out_dir))
    # fabricate a small curve so the report has all four panels
    (out_dir / "curve.csv").write_text(
        "# config_hash=x\nenv_steps,mean,min,max\n256,-10.0,-12.0,-8.0\n"
        "512,-5.0,-6.0,-4.0\n")
    code, out, _ = run_cli(capsys, "report", "--out", str(out_dir))
    assert code == 0
    assert json.loads(out)["panels"] == 4
    svg = (out_dir / "report.svg").read_text()
    assert svg.startswith("<?xml")
    assert svg.count("<g transform=") == 4
    assert "Learning curve" in svg and "ROA" in svg


def test_report_empty_dir_is_config_error(capsys, tmp_path):
    empty = tmp_path / "empty"
    os.makedirs(empty)
    code, _, err = run_cli(capsys, "report", "--out", str(empty))
    assert code == 2
