"""
End-to-end tests for the lab command line.

Every test runs ``python -m scripts.lab`` in a subprocess, the way the
Slurm drivers and users invoke it, and inspects exit codes and files.
"""
import re

import pandas as pd
import pytest

from tests.utils.fixtures import (  # noqa: F401
    project_root, run_lab, s1_raw, setup_test_environment, validate_run_output, write_config
)


def m_value(stdout):
    match = re.search(r"m\(theta_gamma=[^)]*\) = (\S+)", stdout)
    assert match, stdout
    return float(match.group(1))


class TestSimulate:

    def test_zero_length_run(self, tmp_path):
        test_env = setup_test_environment(tmp_path)
        config = write_config(tmp_path, s1_raw(n=10, t_end=0.0))
        out = tmp_path / "run"

        result = run_lab(["simulate", "--config", str(config), "--out", str(out)], test_env["env"])
        assert result.returncode == 0, result.stderr

        output = validate_run_output(out)
        assert len(output["series"]) == 1
        assert output["series"]["t"][0] == 0.0
        assert len(output["profile"]) == 10
        assert "stop_reason: t_end" in output["summary"]
        assert "stop_reason: t_end" in result.stdout

    def test_short_run_default_directory(self, tmp_path):
        test_env = setup_test_environment(tmp_path)
        config = write_config(tmp_path, s1_raw(n=10, t_end=0.0))

        result = run_lab(
            ["-q", "simulate", "--config", str(config), "--set", "solver.t_end=0.02",
             "--set", "output.snapshot_times=[0.01]"],
            test_env["env"],
        )
        assert result.returncode == 0, result.stderr

        out = test_env["results_dir"] / "s1_small"
        output = validate_run_output(out)
        assert output["series"]["t"].iloc[-1] == pytest.approx(0.02)
        assert (out / "profile_t0.01.csv").exists()
        assert output["steady"] is not None
        assert list(output["steady"]["n_roots"]) == [1] * 10

    def test_run_log_records_progress(self, tmp_path):
        test_env = setup_test_environment(tmp_path)
        config = write_config(tmp_path, s1_raw(n=10, t_end=0.01))
        out = tmp_path / "run"

        result = run_lab(["simulate", "--config", str(config), "--out", str(out)], test_env["env"])
        assert result.returncode == 0, result.stderr
        log = (out / "run.log").read_text()
        assert "run s1_small: n=10" in log
        assert "finished: t_end" in log

    def test_config_error(self, tmp_path):
        test_env = setup_test_environment(tmp_path)
        raw = s1_raw()
        raw["domain"]["theta_gamma"] = -1
        config = write_config(tmp_path, raw)

        result = run_lab(["simulate", "--config", str(config), "--out", str(tmp_path / "x")], test_env["env"])
        assert result.returncode == 1
        assert "config error:" in result.stderr
        assert "theta_gamma must be positive" in result.stderr
        assert not (tmp_path / "x").exists()

    def test_missing_config(self, tmp_path):
        test_env = setup_test_environment(tmp_path)
        result = run_lab(["validate-eos", "--config", str(tmp_path / "nope.yml")], test_env["env"])
        assert result.returncode == 1
        assert "cannot read" in result.stderr


class TestValidateEos:

    def test_s1_nuclear_law(self, tmp_path):
        test_env = setup_test_environment(tmp_path)
        result = run_lab(["validate-eos", "--config", "S1"], test_env["env"])
        assert result.returncode == 0, result.stdout + result.stderr
        assert "law: NUC-1 (nuclear)" in result.stdout
        assert m_value(result.stdout) == pytest.approx(-1.05315, abs=1e-4)
        assert "[ok] non-degeneracy" in result.stdout

    def test_s5_thermoviscoelastic_law(self, tmp_path):
        test_env = setup_test_environment(tmp_path)
        result = run_lab(["validate-eos", "--config", "S5"], test_env["env"])
        assert result.returncode == 0, result.stdout + result.stderr
        assert "unbounded below" in result.stdout

    def test_plateau_flagged(self, project_root, tmp_path):
        test_env = setup_test_environment(tmp_path)
        config = project_root / "config" / "plateau_check.yml"
        result = run_lab(["validate-eos", "--config", str(config)], test_env["env"])
        assert result.returncode == 3
        assert "[FAIL] non-degeneracy" in result.stdout


class TestAnalyzeStationary:

    def test_single_root_table(self, tmp_path):
        test_env = setup_test_environment(tmp_path)
        config = write_config(tmp_path, s1_raw(n=10))
        result = run_lab(["analyze-stationary", "--config", str(config)], test_env["env"])
        assert result.returncode == 0, result.stdout + result.stderr
        assert "0 of 10 cells have more than one root" in result.stdout

    def test_three_roots(self, tmp_path):
        test_env = setup_test_environment(tmp_path)
        result = run_lab(
            ["analyze-stationary", "--config", "S2", "--set", "domain.n=8"], test_env["env"]
        )
        assert "8 of 8 cells have more than one root" in result.stdout, result.stderr

    def test_empty_cells(self, tmp_path):
        test_env = setup_test_environment(tmp_path)
        raw = s1_raw(n=4)
        raw["domain"]["p_gamma"] = -1.2
        raw["validation"] = {"allow_subcritical_pressure": True}
        config = write_config(tmp_path, raw)
        result = run_lab(["analyze-stationary", "--config", str(config)], test_env["env"])
        assert result.returncode == 3
        assert "cells without a root: [0, 1, 2, 3]" in result.stdout


class TestSweep:

    def _template(self, tmp_path):
        return write_config(tmp_path, s1_raw(n=10, t_end=0.01), "template.yml")

    def test_serial_and_parallel_agree(self, tmp_path):
        test_env = setup_test_environment(tmp_path)
        template = self._template(tmp_path)
        values = "0.5,0.4,0.6"

        serial = run_lab(["sweep", "--config", str(template), "--axis", "domain.p_gamma",
                          "--values", values, "--out", str(tmp_path / "serial"), "--serial"],
                         test_env["env"])
        assert serial.returncode == 0, serial.stderr
        parallel = run_lab(["sweep", "--config", str(template), "--axis", "domain.p_gamma",
                            "--values", values, "--out", str(tmp_path / "parallel"), "--workers", "2"],
                           test_env["env"])
        assert parallel.returncode == 0, parallel.stderr

        index = pd.read_csv(tmp_path / "serial" / "sweep_index.csv", float_precision="round_trip")
        assert list(index["value"]) == [0.5, 0.4, 0.6]
        assert list(index["index"]) == [0, 1, 2]
        assert set(index["status"]) == {"completed"}
        assert list(index["directory"]) == ["run_000", "run_001", "run_002"]

        names = ["sweep_index.csv"] + [
            f"run_{k:03d}/{f}" for k in range(3) for f in ("series.csv", "profile_final.csv", "steady.csv")
        ]
        for name in names:
            serial_bytes = (tmp_path / "serial" / name).read_bytes()
            assert serial_bytes == (tmp_path / "parallel" / name).read_bytes(), name

    def test_failed_member(self, tmp_path):
        test_env = setup_test_environment(tmp_path)
        template = self._template(tmp_path)
        result = run_lab(["sweep", "--config", str(template), "--axis", "domain.p_gamma",
                          "--values", "0.5,-0.5", "--out", str(tmp_path / "sw"), "--serial"],
                         test_env["env"])
        assert result.returncode == 2
        index = pd.read_csv(tmp_path / "sw" / "sweep_index.csv", float_precision="round_trip")
        assert list(index["status"]) == ["completed", "failed"]

    @pytest.mark.parametrize("axis, values", [
        ("domain.p_gamma", ""),
        ("domain.p_gamma", "a,b"),
        ("domain.nothing", "1"),
        ("eos.builtin", "1"),
    ])
    def test_bad_arguments(self, tmp_path, axis, values):
        test_env = setup_test_environment(tmp_path)
        template = self._template(tmp_path)
        result = run_lab(["sweep", "--config", str(template), "--axis", axis,
                          "--values", values, "--out", str(tmp_path / "sw")], test_env["env"])
        assert result.returncode == 1
        assert "config error: sweep:" in result.stderr
