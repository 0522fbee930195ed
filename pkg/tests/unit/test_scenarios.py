"""Unit tests for scenario presets and their acceptance checks."""

import numpy as np
import pytest

from scripts import scenarios
from scripts.diagnostics import DiagRecord
from scripts.errors import ConfigError
from scripts.run_config import build_config
from scripts.solver import RunResult
from scripts.state import State
from tests.utils.fixtures import s1_raw


def _record(t, E=1.0, V=1.0, v_l2=0.0, eta_cell1=1.0, v_integral=0.0):
    return DiagRecord(
        t=t, dt=0.1, E=E, D=0.0, V=V, v_l2=v_l2, v2_l2=0.0, v_l4=v_l2, theta_l2=0.0,
        pressure_l2=0.0, pressure_max=0.0, eta_min=1.0, eta_max=1.0,
        balance_residual=0.0, v_integral=v_integral, eta_cell1=eta_cell1,
    )


def _result(trajectory, stop_reason="t_end"):
    final = State(trajectory[-1].t, np.ones(2), np.ones(2), np.zeros(3))
    return RunResult(final=final, trajectory=trajectory, snapshots={}, stop_reason=stop_reason)


@pytest.fixture(scope="module")
def config():
    return build_config(s1_raw())


@pytest.mark.parametrize("name", scenarios.PRESETS)
def test_presets_load(name):
    preset = scenarios.load_preset(name)
    assert preset.path.name == f"{name}.yml"
    assert preset.checks
    assert set(preset.checks) <= set(scenarios.CHECKS)


def test_unknown_preset():
    with pytest.raises(ConfigError, match="unknown scenario"):
        scenarios.load_preset("S9")


def test_preset_overrides():
    preset = scenarios.load_preset("S1", ["domain.n=20", "solver.t_end=0.1"])
    assert preset.config.domain.n == 20
    assert preset.config.solver.t_end == 0.1


def test_stop_reason(config):
    result = _result([_record(0.0)], stop_reason="step_failure")
    (one,) = scenarios.evaluate_checks({"stop_reason": ["t_end", "step_failure"]}, config, result, None)
    assert one.passed
    (two,) = scenarios.evaluate_checks({"stop_reason": "stabilized"}, config, result, None)
    assert not two.passed


def test_lyapunov(config):
    result = _result([_record(0.0, E=1.0), _record(1.0, E=0.5)])
    assert scenarios.evaluate_checks({"lyapunov": True}, config, result, None)[0].passed
    result.lyapunov_violations.append((0.5, 1e-3))
    assert not scenarios.evaluate_checks({"lyapunov": True}, config, result, None)[0].passed


def test_final_norms(config):
    result = _result([_record(0.0, v_l2=1.0), _record(1.0, v_l2=1e-4)])
    (check,) = scenarios.evaluate_checks({"final_norms": {"v_l2": 1e-3, "v_l4": 1e-5}}, config, result, None)
    assert not check.passed
    assert "v_l2=1.000e-04<=1.0e-03" in check.detail


def test_expansion(config):
    traj = [_record(float(t), V=np.exp(t)) for t in np.linspace(0.0, 3.0, 31)]
    (check,) = scenarios.evaluate_checks({"expansion": {"growth_ratio": 1.5}}, config, _result(traj), None)
    assert check.passed


def test_wall(config):
    traj = [_record(float(t), eta_cell1=1.0 + t) for t in range(9)]
    (check,) = scenarios.evaluate_checks({"wall_indicators": True}, config, _result(traj), None)
    assert check.passed


def test_steady_checks_without_profile(config):
    result = _result([_record(0.0)])
    checks = scenarios.evaluate_checks({"limit_is_root": True, "mixed_phase": False}, config, result, None)
    assert [c.passed for c in checks] == [False, False]


def test_unevaluable_check_fails(config):
    result = _result([_record(0.0)])
    (check,) = scenarios.evaluate_checks({"final_norms": {"v_l7": 1.0}}, config, result, None)
    assert not check.passed
    assert "could not be evaluated" in check.detail
