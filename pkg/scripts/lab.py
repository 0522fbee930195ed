#!/usr/bin/env python3
"""Command-line front end: simulate, validate-eos, analyze-stationary, sweep.

Examples
--------
    python -m scripts.lab simulate --config config/scenarios/S1.yml --out Results/S1
    python -m scripts.lab simulate --config S3 --out Results/S3 --set solver.t_end=2
    python -m scripts.lab validate-eos --config config/scenarios/S5.yml
    python -m scripts.lab analyze-stationary --config S2
    python -m scripts.lab sweep --config S1 --axis domain.p_gamma --values 0.5,0.2,0.05 --out Results/sweep

Exit codes: 0 success, 1 configuration error, 2 step failure (simulate) or
failed sweep member, 3 failed law or stationary validation.
"""

from __future__ import annotations

import argparse
import copy
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

from scripts import diagnostics, eos, outputs, scenarios
from scripts.errors import ConfigError, LabError, StepFailure
from scripts.run_config import RunConfig, build_config, get_dotted, load_yaml, parse_config, set_dotted
from scripts.solver import RunResult, run
from scripts.stationary import (
    SteadyProfile,
    classify_limit,
    convergence_metrics,
    default_bracket,
    steady_profile,
)

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"
EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_FAILURE = 2
EXIT_VALIDATION = 3
DEFAULT_RESULTS = Path(os.environ.get("RESULTS_DIR") or Path(__file__).resolve().parent.parent / "Results")


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------

def _configure_logging(verbose: bool = False, quiet: bool = False) -> None:
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(level=level, format=LOG_FORMAT, stream=sys.stderr, force=True)


def _resolve_config(name: str) -> Path:
    """A path, or the name of a shipped scenario preset."""
    path = Path(name)
    if not path.exists() and name in scenarios.PRESETS:
        return scenarios.preset_path(name)
    return path


def _attach_run_log(out_dir: Path) -> logging.Handler:
    out_dir.mkdir(parents=True, exist_ok=True)
    handler = logging.FileHandler(out_dir / "run.log", mode="w", encoding="utf-8")
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    handler.setLevel(logging.DEBUG)
    logging.getLogger().addHandler(handler)
    return handler


def _detach(handler: logging.Handler) -> None:
    logging.getLogger().removeHandler(handler)
    handler.close()


def _inf_bracket(config: RunConfig) -> Tuple[float, float]:
    return config.validation.inf_bracket or config.eos.eta_box


def _root_bracket(config: RunConfig) -> Tuple[float, float]:
    return config.validation.root_bracket or default_bracket(config.initial_state.eta)


def _fmt(value: Optional[float]) -> str:
    return "never" if value is None else f"{value:.10g}"


def _steady(config: RunConfig) -> SteadyProfile:
    domain = config.domain
    return steady_profile(
        domain, domain.grid, domain.stationary, config.eos, _root_bracket(config), config.validation.root_tol
    )


def _root_table(profile: SteadyProfile, centers: Sequence[float]) -> List[str]:
    lines = ["cell  x             pS              roots"]
    for i, (x, rs) in enumerate(zip(centers, profile.root_sets)):
        roots = " ".join(f"{r:.10g}" for r in rs.roots) or "(none)"
        lines.append(f"{i:4d}  {x:<12.6g}  {rs.level:<14.8g}  {roots}")
    return lines


# ---------------------------------------------------------------------------
# validate-eos / analyze-stationary
# ---------------------------------------------------------------------------

def _eos_report(config: RunConfig) -> Tuple[bool, List[str]]:
    spec, domain = config.eos, config.domain
    pS = domain.stationary
    report = eos.validate(spec, pS.pS_min, pS.pS_max, thresholds=config.validation.thresholds)
    lines = [f"law: {spec.name} ({spec.family})", report.format()]

    inf = eos.inf_pressure(spec, domain.theta_gamma, _inf_bracket(config))
    lines.append(f"m(theta_gamma={domain.theta_gamma:g}) = {inf.describe()}")
    lines.append(f"p_gamma = {domain.p_gamma:.10g}, pS range [{pS.pS_min:.10g}, {pS.pS_max:.10g}]")
    if not inf.unbounded and domain.p_gamma <= inf.value:
        lines.append("  note: p_gamma <= m(theta_gamma); the fluid may expand without bound")

    plat = config.validation.plateau
    levels = plat.levels or (pS.pS_min, pS.pS_max)
    plateaus = eos.check_nondegeneracy(
        spec, domain.theta_gamma, levels, spec.eta_box, plat.window, plat.flat_tol
    )
    if plateaus:
        for p in plateaus:
            lines.append(
                f"[FAIL] non-degeneracy: p(., {domain.theta_gamma:g}) flat at {p.level:.10g} "
                f"on eta in [{p.eta_lo:.6g}, {p.eta_hi:.6g}]"
            )
    else:
        lines.append(f"[ok] non-degeneracy: no plateau of width >= {plat.window:g} over levels "
                     f"[{levels[0]:.6g}, {levels[1]:.6g}]")
    return report.passed and not plateaus, lines


def cmd_validate_eos(args: argparse.Namespace) -> int:
    config = parse_config(_resolve_config(args.config), args.set)
    passed, lines = _eos_report(config)
    print("\n".join(lines))
    return EXIT_OK if passed else EXIT_VALIDATION


def cmd_analyze_stationary(args: argparse.Namespace) -> int:
    config = parse_config(_resolve_config(args.config), args.set)
    passed, lines = _eos_report(config)
    profile = _steady(config)
    lines.append("")
    lines.extend(_root_table(profile, config.domain.grid.centers))
    empty = profile.empty_cells
    if empty:
        lines.append(f"cells without a root: {empty}")
    multi = sum(1 for rs in profile.root_sets if len(rs) > 1)
    lines.append(f"{multi} of {len(profile.root_sets)} cells have more than one root")
    print("\n".join(lines))
    return EXIT_OK if passed and not empty else EXIT_VALIDATION


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def _summary(config: RunConfig, result: RunResult, profile: Optional[SteadyProfile],
             checks: List[scenarios.CheckResult]) -> List[str]:
    traj = result.trajectory
    first, last = traj[0], traj[-1]
    lines = [
        f"run: {config.name}",
        f"law: {config.eos.name} ({config.eos.family})",
        f"stop_reason: {result.stop_reason}",
        f"t_final: {result.final.t:.10g}",
        f"steps: {result.steps}  retries: {result.retries}  "
        f"contraction_violations: {result.contraction_violations}",
    ]
    if result.failure:
        lines.append(f"failure: {result.failure}")
    lines.append(f"E: {first.E:.10g} -> {last.E:.10g}; Lyapunov violations: {len(result.lyapunov_violations)}")
    lines.append(f"max |energy balance residual|: {result.max_balance_residual:.6e}")

    times = convergence_metrics(traj, config.thresholds, config.stop_rule.dwell_fraction)
    for key, value in times.items():
        lines.append(f"first_passage {key} <= {config.thresholds[key]:g}: {_fmt(value)}")
    lines.append(
        f"final norms: v_l2={last.v_l2:.6e} theta_l2={last.theta_l2:.6e} pressure_l2={last.pressure_l2:.6e}"
    )
    lines.append(
        "eta extremes over run: "
        f"min {min(r.eta_min for r in traj):.10g}, max {max(r.eta_max for r in traj):.10g}"
    )

    try:
        inf = eos.inf_pressure(config.eos, config.domain.theta_gamma, _inf_bracket(config))
        lines.append(f"m(theta_gamma) = {inf.describe()}")
    except LabError as exc:
        lines.append(f"m(theta_gamma): not available ({exc})")

    if len(traj) >= 2:
        bounds = diagnostics.eta_bounds_check(traj)
        lines.append(
            f"eta bounds: min ok={bounds.min_ok} (overall {bounds.overall_min:.6g}, early {bounds.early_min:.6g}); "
            f"max ok={bounds.max_ok} (late slope {bounds.max_slope:.3e})"
        )
        exp = diagnostics.expansion_report(traj)
        lines.append(
            f"V: {first.V:.10g} -> {last.V:.10g}; growth V(2T1)/V(T1) = {exp.growth_ratio:.6g} "
            f"at T1 = {exp.t1:.6g}; final-third log V slope = {exp.log_v_slope:.6g}"
        )
        wall = diagnostics.wall_indicators(traj)
        lines.append(
            f"wall: eta_cell1 increasing={wall.eta_cell1_increasing}, "
            f"|int v| max/initial={wall.v_integral_ratio:.6g}"
        )

    if profile is not None and profile.classified:
        distinct = profile.distinct_roots()
        off = int((~profile.within_tol).sum())
        lines.append(
            f"limit: {len(distinct)} distinct root value(s), mixed_phase={profile.mixed_phase}, "
            f"{off} cell(s) outside class_tol {config.validation.class_tol:g}"
        )
    elif profile is not None:
        lines.append(f"limit: not classified; cells without a root: {profile.empty_cells}")

    lines.extend(f"warning: {w}" for w in result.warnings)
    for c in checks:
        lines.append(f"check {c.name}: {'PASS' if c.passed else 'FAIL'} ({c.detail})")
    return lines


def simulate(config: RunConfig, out_dir: Path) -> Tuple[int, RunResult]:
    """Run *config* and write every output file into *out_dir*."""
    handler = _attach_run_log(out_dir)
    try:
        code = EXIT_OK
        try:
            result = run(config)
        except StepFailure as exc:
            result = exc.partial
            code = EXIT_FAILURE

        grid = config.domain.grid
        outputs.write_series(out_dir / "series.csv", result.trajectory, config.q_list)
        for t, state in sorted(result.snapshots.items()):
            outputs.write_profile(out_dir / outputs.profile_name(t), state, grid)
        outputs.write_profile(out_dir / "profile_final.csv", result.final, grid)

        profile: Optional[SteadyProfile] = None
        try:
            profile = _steady(config)
            profile = classify_limit(
                result.final, profile, config.eos, config.domain.theta_gamma,
                config.validation.class_tol, allow_empty=True,
            )
        except LabError as exc:
            logger.warning("stationary classification skipped: %s", exc)
        if profile is not None:
            outputs.write_steady(out_dir / "steady.csv", grid, config.domain.stationary, profile, result.final)

        checks = scenarios.evaluate_checks(config.raw.get("checks") or {}, config, result, profile)
        for c in checks:
            if not c.passed:
                logger.warning("check %s failed: %s", c.name, c.detail)
        lines = _summary(config, result, profile, checks)
        outputs.write_summary(out_dir / "summary.txt", lines)
        return code, result
    finally:
        _detach(handler)


def _out_dir(args_out: Optional[Path], config: RunConfig) -> Path:
    if args_out is not None:
        return args_out
    if config.output_dir is not None:
        return config.output_dir if config.output_dir.is_absolute() else config.base_dir / config.output_dir
    return DEFAULT_RESULTS / config.name


def cmd_simulate(args: argparse.Namespace) -> int:
    config = parse_config(_resolve_config(args.config), args.set)
    out_dir = _out_dir(args.out, config)
    code, _ = simulate(config, out_dir)
    print((out_dir / "summary.txt").read_text(encoding="utf-8"), end="")
    return code


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------

def _parse_values(text: str) -> List[float]:
    items = [s.strip() for s in text.split(",") if s.strip()]
    if not items:
        raise ConfigError("sweep: --values must list at least one number")
    try:
        return [float(s) for s in items]
    except ValueError as exc:
        raise ConfigError(f"sweep: --values must be numbers ({exc})") from exc


def _check_axis(raw: Dict[str, Any], axis: str) -> None:
    try:
        current = get_dotted(raw, axis)
    except KeyError:
        raise ConfigError(f"sweep: axis {axis!r} is not a key of the config") from None
    if isinstance(current, bool) or not isinstance(current, (int, float)):
        raise ConfigError(f"sweep: axis {axis!r} must hold a number, found {current!r}")


def _sweep_member(task: Tuple[Dict[str, Any], str, str, str, int, float, str]) -> Dict[str, Any]:
    raw, base_dir, source, axis, index, value, out_root = task
    name = f"run_{index:03d}"
    row: Dict[str, Any] = {k: math.nan for k in outputs.SWEEP_COLUMNS}
    row.update(index=index, value=value, status="failed", stop_reason="", directory=name)
    member = copy.deepcopy(raw)
    set_dotted(member, axis, value)
    member["name"] = f"{raw.get('name', Path(source).stem)}_{name}"
    try:
        config = build_config(member, Path(base_dir), f"{source}[{axis}={value:g}]")
        _, result = simulate(config, Path(out_root) / name)
    except LabError as exc:
        logger.error("sweep member %d (%s=%g) failed: %s", index, axis, value, exc)
        return row
    last = result.trajectory[-1]
    row.update(
        status="completed",
        stop_reason=result.stop_reason,
        t_final=result.final.t,
        V_final=last.V,
        v_l2=last.v_l2,
        theta_l2=last.theta_l2,
        pressure_l2=last.pressure_l2,
        eta_min=last.eta_min,
        eta_max=last.eta_max,
    )
    return row


def _worker_count(requested: Optional[int], jobs: int) -> int:
    workers = requested or os.cpu_count() or 1
    cap = os.environ.get("LAB_MAX_WORKERS")
    if cap:
        try:
            workers = min(workers, max(1, int(cap)))
        except ValueError:
            logger.warning("ignoring LAB_MAX_WORKERS=%r (not an integer)", cap)
    return max(1, min(workers, jobs))


def sweep(template: Path, axis: str, values: Sequence[float], out_root: Path,
          workers: Optional[int] = None, serial: bool = False) -> List[Dict[str, Any]]:
    """One simulate per value; rows of sweep_index.csv in input order."""
    if not values:
        raise ConfigError("sweep: empty value list")
    raw = load_yaml(template)
    _check_axis(raw, axis)
    build_config(raw, template.resolve().parent, str(template))

    out_root.mkdir(parents=True, exist_ok=True)
    tasks = [
        (raw, str(template.resolve().parent), str(template), axis, i, float(v), str(out_root))
        for i, v in enumerate(values)
    ]
    n_workers = 1 if serial else _worker_count(workers, len(tasks))
    logger.info("sweep over %s: %d values, %d worker(s)", axis, len(tasks), n_workers)
    if n_workers == 1:
        rows = [_sweep_member(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            rows = list(pool.map(_sweep_member, tasks))
    outputs.write_sweep_index(out_root / "sweep_index.csv", rows)
    return rows


def cmd_sweep(args: argparse.Namespace) -> int:
    values = _parse_values(args.values)
    rows = sweep(_resolve_config(args.config), args.axis, values, args.out, args.workers, args.serial)
    for r in rows:
        print(f"{r['index']:3d}  {args.axis}={r['value']:<12g} {r['status']:<9} {r['stop_reason']}")
    return EXIT_OK if all(r["status"] == "completed" for r in rows) else EXIT_FAILURE


# ---------------------------------------------------------------------------
# CLI wrapper
# ---------------------------------------------------------------------------

def _parse_args(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(
        description="Lagrangian 1D compressible flow with a two-term pressure law",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    noise = parser.add_mutually_exclusive_group()
    noise.add_argument("-v", "--verbose", action="store_true", help="Debug logging")
    noise.add_argument("-q", "--quiet", action="store_true", help="Warnings and errors only")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", required=True, help="Config file or scenario preset name (S1..S5)")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="Override a dotted config key, e.g. solver.t_end=2 (repeatable)")

    p = sub.add_parser("simulate", help="Run one simulation and write its outputs")
    common(p)
    p.add_argument("--out", type=Path, default=None, help="Output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("validate-eos", help="Check the pressure law against its condition class")
    common(p)
    p.set_defaults(func=cmd_validate_eos)

    p = sub.add_parser("analyze-stationary", help="Law checks plus the per-cell root table")
    common(p)
    p.set_defaults(func=cmd_analyze_stationary)

    p = sub.add_parser("sweep", help="Run one simulation per value of a numeric config key")
    p.add_argument("--config", required=True, help="Template config file or preset name")
    p.add_argument("--axis", required=True, help="Dotted config key, e.g. domain.p_gamma")
    p.add_argument("--values", required=True, help="Comma-separated values")
    p.add_argument("--out", type=Path, required=True, help="Sweep output directory")
    p.add_argument("--workers", type=int, default=None, help="Worker processes (capped by LAB_MAX_WORKERS)")
    p.add_argument("--serial", action="store_true", help="Run members one after another in-process")
    p.set_defaults(func=cmd_sweep)
    return parser.parse_args(argv)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _parse_args(argv)
    _configure_logging(args.verbose, args.quiet)
    try:
        return args.func(args)
    except ConfigError as exc:
        for msg in exc.messages:
            print(f"config error: {msg}", file=sys.stderr)
        return EXIT_CONFIG
    except LabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
