"""Tests for the command-line front end: artifacts, determinism, exit codes."""

import json

import pytest

from modeswitch.cli import main


def write_config(tmp_path, **overrides):
    body = {
        "environment": {
            "kind": "random-mdp",
            "n_states": 3,
            "n_actions": 2,
            "seed": 3,
            "rho": 0.05,
            "gamma": 0.9,
        },
        "grid_size": 101,
        "n_episodes": 64,
        "horizon": 60,
        "master_seed": 11,
        "out_dir": str(tmp_path / "out"),
        "mixing_k_max": 60,
    }
    body.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(body))
    return path


def read_outputs(out_dir):
    return {
        child.name: child.read_bytes()
        for child in sorted(out_dir.iterdir())
        if child.suffix == ".csv"
    }


class TestSolveCommand:
    def test_writes_artifacts_and_manifest(self, tmp_path):
        config = write_config(tmp_path)
        assert main(["solve", "--config", str(config)]) == 0
        out = tmp_path / "out"
        for name in (
            "policies.csv",
            "values.csv",
            "stationary.csv",
            "value_table.csv",
            "thresholds.csv",
            "manifest.json",
        ):
            assert (out / name).exists()
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["solve"]["lambda"] > 0.0
        assert manifest["versions"]["modeswitch"]

    def test_reruns_are_byte_identical(self, tmp_path):
        config = write_config(tmp_path)
        assert main(["solve", "--config", str(config)]) == 0
        first = read_outputs(tmp_path / "out")
        assert main(["solve", "--config", str(config)]) == 0
        second = read_outputs(tmp_path / "out")
        assert first == second

    def test_inventory_manifest_lambda(self, tmp_path):
        config = write_config(
            tmp_path,
            environment={
                "kind": "inventory",
                "capacity": 6,
                "shortfall_cost": 100.0,
                "rho": 0.05,
                "gamma": 0.99,
                "order_cost_basis": "order",
            },
            grid_size=51,
        )
        assert main(["solve", "--config", str(config)]) == 0
        manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
        assert manifest["solve"]["lambda"] > 0.0


class TestSimulateCommand:
    def test_report_and_episode_csvs(self, tmp_path):
        config = write_config(tmp_path, write_episodes=True)
        assert main(["simulate", "--config", str(config)]) == 0
        out = tmp_path / "out"
        report_lines = (out / "report.csv").read_text().splitlines()
        assert report_lines[0].startswith("rho,lambda,j_mo,j_cd")
        assert len(report_lines) == 2
        episode_lines = (out / "episodes.csv").read_text().splitlines()
        assert len(episode_lines) == 65

    def test_worker_count_invariance(self, tmp_path):
        config = write_config(tmp_path, n_episodes=2100)
        assert main(["simulate", "--config", str(config), "--workers", "1"]) == 0
        serial = read_outputs(tmp_path / "out")
        assert main(["simulate", "--config", str(config), "--workers", "8"]) == 0
        threaded = read_outputs(tmp_path / "out")
        assert serial == threaded

    def test_rho_sweep_rows(self, tmp_path):
        config = write_config(tmp_path, rho_sweep=[0.05, 0.08], n_episodes=32)
        assert main(["simulate", "--config", str(config)]) == 0
        lines = (tmp_path / "out" / "report.csv").read_text().splitlines()
        assert len(lines) == 3


class TestFigureCommand:
    def test_threshold_and_pfa_files(self, tmp_path):
        config = write_config(tmp_path, rho_sweep=[0.05, 0.08], n_episodes=48)
        assert main(["figure1", "--config", str(config)]) == 0
        out = tmp_path / "out"
        threshold_lines = (out / "thresholds.csv").read_text().splitlines()
        assert len(threshold_lines) == 1 + 2 * 3
        pfa_lines = (out / "pfa.csv").read_text().splitlines()
        assert len(pfa_lines) == 3

    def test_requires_sweep(self, tmp_path):
        config = write_config(tmp_path)
        assert main(["figure1", "--config", str(config)]) == 1


class TestMixingCommand:
    def test_profiles_and_nonnegative_slack(self, tmp_path):
        config = write_config(tmp_path)
        assert main(["mixing", "--config", str(config)]) == 0
        out = tmp_path / "out"
        envelope_lines = (out / "mixing_envelope.csv").read_text().splitlines()
        assert len(envelope_lines) == 5
        for line in envelope_lines[1:]:
            cells = line.split(",")
            assert float(cells[-1]) >= 0.0  # min slack
        profile_lines = (out / "mixing_profile.csv").read_text().splitlines()
        assert len(profile_lines) == 1 + 4 * 61


class TestErrorPaths:
    def test_unknown_key_is_config_error(self, tmp_path):
        config = write_config(tmp_path, typo_key=1)
        assert main(["solve", "--config", str(config)]) == 1

    def test_zero_episodes_is_config_error(self, tmp_path, capsys):
        config = write_config(tmp_path, n_episodes=0)
        assert main(["simulate", "--config", str(config)]) == 1
        assert "no episodes requested" in capsys.readouterr().err

    def test_missing_config_file(self, tmp_path):
        assert main(["solve", "--config", str(tmp_path / "nope.json")]) == 1

    def test_undefined_weight_is_numerical_error(self, tmp_path, capsys):
        # Identical kernels give identical policies, so the numerator gap is zero.
        kernel = [[[0.7, 0.3], [0.4, 0.6]], [[0.5, 0.5], [0.2, 0.8]]]
        config = write_config(
            tmp_path,
            environment={
                "kind": "custom-kernels",
                "kernel_pre": kernel,
                "kernel_post": kernel,
                "stage_cost": [[1.0, 0.4], [0.8, 0.2]],
                "rho": 0.05,
                "gamma": 0.9,
            },
        )
        assert main(["solve", "--config", str(config)]) == 2
        err = capsys.readouterr().err
        assert "solve" in err and "numerator nonpositive" in err
