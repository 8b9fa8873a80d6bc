import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from circuitrl.cli import main


def run_cli(*args) -> int:
    return main(list(args))


class TestDispatch:
    def test_unknown_subcommand_usage_error(self):
        with pytest.raises(SystemExit) as err:
            run_cli("frobnicate")
        assert err.value.code == 2

    def test_unknown_flag_usage_error(self):
        with pytest.raises(SystemExit) as err:
            run_cli("train", "--scenario", "hostaware", "--out", "x", "--bogus")
        assert err.value.code == 2

    def test_version_flag(self, capsys):
        with pytest.raises(SystemExit) as err:
            run_cli("--version")
        assert err.value.code == 0

    def test_missing_scenario_is_runtime_error(self, tmp_path):
        code = run_cli("eval", "--scenario", "not-a-scenario",
                       "--policy", "nope.json", "--out", str(tmp_path),
                       "--seed", "1")
        assert code == 1


class TestTrainEval:
    def test_train_writes_manifest_and_outputs(self, tmp_path):
        out = tmp_path / "runs" / "a"
        code = run_cli("train", "--scenario", "bandit-quadratic", "--seed", "1",
                       "--out", str(out), "--total-steps", "4096")
        assert code == 0
        assert (out / "manifest.json").exists()
        assert (out / "policy.json").exists()
        assert (out / "train_log.csv").exists()
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["subcommand"] == "train"
        assert manifest["master_seed"] == 1
        assert manifest["resolved_config"]["ppo"]["total_steps"] == 4096

    def test_eval_roundtrip(self, tmp_path):
        out = tmp_path / "train"
        run_cli("train", "--scenario", "bandit-quadratic", "--seed", "1",
                "--out", str(out), "--total-steps", "4096")
        ev = tmp_path / "eval"
        code = run_cli("eval", "--scenario", "bandit-quadratic",
                       "--policy", str(out / "policy.json"), "--n-test", "5",
                       "--seed", "2", "--out", str(ev))
        assert code == 0
        report = json.loads((ev / "report.json").read_text())
        assert report["n_test"] == 5
        assert (ev / "report.csv").exists()

    def test_flag_overrides_config_file(self, tmp_path):
        cfg = tmp_path / "ppo.json"
        cfg.write_text(json.dumps({"total_steps": 999999, "lr": 0.001}))
        out = tmp_path / "run"
        code = run_cli("train", "--scenario", "bandit-quadratic", "--seed", "0",
                       "--out", str(out), "--config", str(cfg),
                       "--total-steps", "2048")
        assert code == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["resolved_config"]["ppo"]["total_steps"] == 2048
        assert manifest["resolved_config"]["ppo"]["lr"] == 0.001


class TestSimulate:
    def test_hostaware_json_output(self, capsys):
        code = run_cli("simulate", "--scenario", "hostaware",
                       "--theta", "n_s=0.5,k_b=1.0,k_u=1.0",
                       "--action", "w=150")
        assert code == 0
        out = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        assert out["steady"] is True
        assert out["gfp_ss"] > 0

    def test_repressilator_csv_determinism(self, tmp_path, capsys):
        args = ("simulate", "--scenario", "repressilator",
                "--theta", "H=5,g_X=1.0,g_m=10,eps=0.05",
                "--action", "k_X=300,k_m=60,K=200", "--seed", "3")
        code = run_cli(*args, "--out", str(tmp_path / "a.csv"))
        assert code == 0
        code = run_cli(*args, "--out", str(tmp_path / "b.csv"))
        assert code == 0
        assert (tmp_path / "a.csv").read_text() == (tmp_path / "b.csv").read_text()
        summary = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        assert "frequency" in summary

    def test_missing_theta_errors(self, capsys):
        code = run_cli("simulate", "--scenario", "hostaware",
                       "--theta", "n_s=0.5", "--action", "w=10")
        assert code == 1

    def test_grid_curve(self, tmp_path):
        code = run_cli("simulate", "--scenario", "hostaware",
                       "--theta", "n_s=0.5,k_b=1.0,k_u=1.0", "--grid", "5",
                       "--out", str(tmp_path / "curve.csv"))
        assert code == 0
        lines = (tmp_path / "curve.csv").read_text().strip().splitlines()
        assert lines[0] == "action,gfp_ss,lambda_ss"
        assert len(lines) == 6


class TestArtifactsCommand:
    def test_no_artifacts_needed(self, tmp_path, capsys):
        code = run_cli("artifacts", "--scenario", "hostaware",
                       "--artifacts-dir", str(tmp_path))
        assert code == 0
        assert "needs no artifacts" in capsys.readouterr().out


class TestEntryPoint:
    def test_module_invocation(self):
        proc = subprocess.run([sys.executable, "-m", "circuitrl.cli", "--version"],
                              capture_output=True, text=True)
        assert proc.returncode == 0
