"""Scenario presets and their acceptance checks.

Presets are ordinary run configs under ``config/scenarios/`` with an extra
``checks:`` mapping.  Each key names an entry of :data:`CHECKS`; its value
carries the check's parameters (or ``true``).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence

import numpy as np

from scripts import diagnostics
from scripts.errors import ConfigError
from scripts.run_config import RunConfig, parse_config
from scripts.solver import RunResult
from scripts.stationary import SteadyProfile, convergence_metrics

logger = logging.getLogger(__name__)

SCENARIO_DIR = Path(__file__).resolve().parent.parent / "config" / "scenarios"
PRESETS = ("S1", "S2", "S3", "S4", "S5")


@dataclass
class ScenarioPreset:
    name: str
    path: Path
    config: RunConfig
    checks: Dict[str, Any]


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def preset_path(name: str) -> Path:
    return SCENARIO_DIR / f"{name}.yml"


def load_preset(name: str, overrides: Sequence[str] = ()) -> ScenarioPreset:
    if name not in PRESETS:
        raise ConfigError(f"unknown scenario {name!r}; available: {list(PRESETS)}")
    path = preset_path(name)
    config = parse_config(path, overrides)
    checks = config.raw.get("checks") or {}
    if not isinstance(checks, dict):
        raise ConfigError(f"{path}: checks must be a mapping")
    unknown = sorted(set(checks) - set(CHECKS))
    if unknown:
        raise ConfigError(f"{path}: unknown check(s) {unknown}")
    return ScenarioPreset(name=name, path=path, config=config, checks=checks)


# ---------------------------------------------------------------------------
# Checks
# ---------------------------------------------------------------------------

CheckFn = Callable[[Any, RunConfig, RunResult, Optional[SteadyProfile]], CheckResult]


def _stop_reason(arg: Any, config: RunConfig, result: RunResult, profile: Optional[SteadyProfile]) -> CheckResult:
    allowed = [arg] if isinstance(arg, str) else list(arg)
    return CheckResult("stop_reason", result.stop_reason in allowed,
                       f"{result.stop_reason} (allowed: {', '.join(allowed)})")


def _lyapunov(arg: Any, config: RunConfig, result: RunResult, profile: Optional[SteadyProfile]) -> CheckResult:
    traj = result.trajectory
    decreased = traj[-1].E < traj[0].E
    ok = not result.lyapunov_violations and decreased
    return CheckResult(
        "lyapunov",
        ok,
        f"{len(result.lyapunov_violations)} step violation(s); E(0)={traj[0].E:.10g} E(T)={traj[-1].E:.10g}",
    )


def _final_norms(arg: Mapping[str, float], config: RunConfig, result: RunResult,
                 profile: Optional[SteadyProfile]) -> CheckResult:
    last = result.trajectory[-1]
    parts, ok = [], True
    for key, limit in arg.items():
        value = getattr(last, key) if hasattr(last, key) else last.v_lq[key]
        ok &= value <= float(limit)
        parts.append(f"{key}={value:.3e}<={float(limit):.1e}")
    return CheckResult("final_norms", bool(ok), ", ".join(parts))


def _first_passage(arg: Any, config: RunConfig, result: RunResult, profile: Optional[SteadyProfile]) -> CheckResult:
    times = convergence_metrics(result.trajectory, config.thresholds)
    ok = all(t is not None for t in times.values())
    return CheckResult("first_passage", ok, ", ".join(f"{k}={v}" for k, v in times.items()))


def _eta_bounds(arg: Any, config: RunConfig, result: RunResult, profile: Optional[SteadyProfile]) -> CheckResult:
    b = diagnostics.eta_bounds_check(result.trajectory)
    return CheckResult(
        "eta_bounds",
        b.min_ok and b.max_ok,
        f"min {b.overall_min:.6g} vs early {b.early_min:.6g}; late max-eta slope {b.max_slope:.3e}",
    )


def _limit_is_root(arg: Any, config: RunConfig, result: RunResult, profile: Optional[SteadyProfile]) -> CheckResult:
    if profile is None or profile.within_tol is None:
        return CheckResult("limit_is_root", False, "no classified steady profile")
    stuck = np.flatnonzero(~profile.within_tol)
    residual = float(np.nanmax(profile.pressure_residual))
    limit = None
    if isinstance(arg, Mapping) and "pressure_residual" in arg:
        limit = float(arg["pressure_residual"])
    ok = stuck.size == 0 and (limit is None or residual <= limit)
    detail = f"{stuck.size} cell(s) away from every root; max |p(eta,theta_gamma)-pS| = {residual:.3e}"
    return CheckResult("limit_is_root", ok, detail)


def _mixed_phase(arg: Any, config: RunConfig, result: RunResult, profile: Optional[SteadyProfile]) -> CheckResult:
    if profile is None or profile.selected is None:
        return CheckResult("mixed_phase", False, "no classified steady profile")
    return CheckResult(
        "mixed_phase",
        profile.mixed_phase == bool(arg),
        f"mixed_phase={profile.mixed_phase}; branches {sorted(set(int(b) for b in profile.branch if b >= 0))}",
    )


def _expansion(arg: Mapping[str, float], config: RunConfig, result: RunResult,
               profile: Optional[SteadyProfile]) -> CheckResult:
    rep = diagnostics.expansion_report(result.trajectory)
    need = float(arg.get("growth_ratio", 1.5)) if isinstance(arg, Mapping) else 1.5
    ok = rep.growth_ratio >= need and rep.log_v_slope > 0
    return CheckResult(
        "expansion",
        ok,
        f"V(2T1)/V(T1)={rep.growth_ratio:.4g} at T1={rep.t1:.4g}; final-third log V slope {rep.log_v_slope:.4g}",
    )


def _wall_indicators(arg: Any, config: RunConfig, result: RunResult,
                     profile: Optional[SteadyProfile]) -> CheckResult:
    w = diagnostics.wall_indicators(result.trajectory)
    return CheckResult(
        "wall_indicators",
        w.either_holds,
        f"eta_cell1 increasing={w.eta_cell1_increasing} (slope {w.eta_cell1_slope:.3e}); "
        f"|int v| max/initial={w.v_integral_ratio:.3g}",
    )


CHECKS: Dict[str, CheckFn] = {
    "stop_reason": _stop_reason,
    "lyapunov": _lyapunov,
    "final_norms": _final_norms,
    "first_passage": _first_passage,
    "eta_bounds": _eta_bounds,
    "limit_is_root": _limit_is_root,
    "mixed_phase": _mixed_phase,
    "expansion": _expansion,
    "wall_indicators": _wall_indicators,
}


def evaluate_checks(
    checks: Mapping[str, Any],
    config: RunConfig,
    result: RunResult,
    profile: Optional[SteadyProfile],
) -> List[CheckResult]:
    out: List[CheckResult] = []
    for name, arg in checks.items():
        try:
            out.append(CHECKS[name](arg, config, result, profile))
        except (KeyError, TypeError, ValueError) as exc:
            out.append(CheckResult(name, False, f"check could not be evaluated: {exc}"))
    return out
