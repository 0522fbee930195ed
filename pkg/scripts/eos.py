"""Two-term pressure laws p(eta, theta) = p0(eta) + p1(eta)*theta.

An :class:`EosSpec` bundles the potentials ``P0``, ``P1``, their
derivatives ``p0``, ``p1``, the specific heat, the viscosity and the heat
conductivity ``kappa(eta, theta)``.  The module evaluates the state
functions, checks membership in the nuclear or thermoviscoelastic
condition classes, locates the infimum pressure ``m(theta_gamma)`` and
scans for pressure plateaus.

Built-in laws live in ``config/eos.yml``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import yaml
from scipy.optimize import minimize_scalar

from scripts.errors import ConfigError, DomainError, ExpressionError
from scripts.expressions import Expression, compile_expression

logger = logging.getLogger(__name__)

FAMILIES = ("nuclear", "thermoviscoelastic")
REGISTRY_PATH = Path(__file__).resolve().parent.parent / "config" / "eos.yml"

# Finite-difference consistency check of p0/p1 against P0/P1.
FD_STEP = 1.0e-4
FD_RTOL = 1.0e-6
FD_SAMPLES = 32


@dataclass(frozen=True)
class EosSpec:
    """Immutable description of a two-term pressure law."""

    name: str
    family: str
    P0: Expression = field(repr=False)
    P1: Expression = field(repr=False)
    p0: Expression = field(repr=False)
    p1: Expression = field(repr=False)
    kappa: Expression = field(repr=False)
    cV: float
    nu: float
    kappa_lo: float
    kappa_hi: float
    eta_check: Optional[float] = None
    eta_hat: Optional[float] = None
    eval_bracket: Tuple[float, float] = (1.0e-8, 1.0e8)
    eta_box: Tuple[float, float] = (0.05, 50.0)
    theta_box: Tuple[float, float] = (0.01, 10.0)
    description: str = ""

    def __post_init__(self) -> None:
        problems = _structural_problems(self)
        if problems:
            raise ConfigError([f"eos {self.name}: {msg}" for msg in problems])

    def verify_invariants(self) -> List[str]:
        """Return the violated sampled invariants (derivative consistency, kappa bounds)."""
        problems: List[str] = []
        etas = np.geomspace(self.eta_box[0], self.eta_box[1], FD_SAMPLES)
        for big, small in (("P0", "p0"), ("P1", "p1")):
            potential: Expression = getattr(self, big)
            derivative: Expression = getattr(self, small)
            h = FD_STEP * etas
            fd = (potential(etas + h) - potential(etas - h)) / (2.0 * h)
            exact = derivative(etas)
            scale = np.maximum.reduce(
                [np.abs(exact), np.abs(potential(etas)) / etas, np.full_like(etas, 1.0e-8)]
            )
            bad = np.flatnonzero(~(np.abs(fd - exact) <= FD_RTOL * scale))
            if bad.size:
                k = int(bad[0])
                problems.append(
                    f"{small} is not the derivative of {big}: at eta={etas[k]:.6g} "
                    f"finite difference {fd[k]:.10g} vs {small}={exact[k]:.10g}"
                )
        eg, tg = np.meshgrid(
            np.geomspace(*self.eta_box, 16), np.geomspace(*self.theta_box, 16), indexing="ij"
        )
        kv = self.kappa(eg, tg)
        slack = 1.0e-12 * max(1.0, self.kappa_hi)
        low = kv < self.kappa_lo - slack
        high = kv > self.kappa_hi + slack
        if np.any(low | high) or not np.all(np.isfinite(kv)):
            i, j = np.unravel_index(int(np.argmax(low | high | ~np.isfinite(kv))), kv.shape)
            problems.append(
                f"kappa({eg[i, j]:.6g}, {tg[i, j]:.6g}) = {kv[i, j]:.6g} outside "
                f"[{self.kappa_lo}, {self.kappa_hi}]"
            )
        return problems


def _structural_problems(spec: EosSpec) -> List[str]:
    problems: List[str] = []
    if spec.family not in FAMILIES:
        problems.append(f"family must be one of {FAMILIES}, got {spec.family!r}")
    if not spec.cV > 0:
        problems.append("cV must be positive")
    if not spec.nu > 0:
        problems.append("nu must be positive")
    if not spec.kappa_lo > 0:
        problems.append("kappa_lo must be positive")
    if not spec.kappa_hi >= spec.kappa_lo:
        problems.append("kappa_hi must be >= kappa_lo")
    for label, (lo, hi) in (
        ("eval_bracket", spec.eval_bracket),
        ("eta_box", spec.eta_box),
        ("theta_box", spec.theta_box),
    ):
        if not 0 < lo < hi:
            problems.append(f"{label} must satisfy 0 < lo < hi, got ({lo}, {hi})")
    if spec.family == "thermoviscoelastic":
        if spec.eta_check is None or spec.eta_hat is None:
            problems.append("thermoviscoelastic family requires eta_check and eta_hat")
        elif not (0 < spec.eta_check <= spec.eta_hat < math.inf):
            problems.append("thermoviscoelastic family requires 0 < eta_check <= eta_hat < inf")
    return problems


# ---------------------------------------------------------------------------
# State functions
# ---------------------------------------------------------------------------


def _check_eta(spec: EosSpec, eta: Any) -> np.ndarray:
    e = np.asarray(eta, dtype=float)
    if not np.all(e > 0):
        raise DomainError(f"eta must be positive, got min {np.min(e)!r}")
    lo, hi = spec.eval_bracket
    if np.any(e < lo) or np.any(e > hi):
        raise DomainError(f"eta outside evaluation bracket [{lo:g}, {hi:g}] of {spec.name}")
    return e


def _out(value: Any) -> Any:
    return float(value) if np.ndim(value) == 0 else np.asarray(value, dtype=float)


def pressure(spec: EosSpec, eta: Any, theta: Any) -> Any:
    """p0(eta) + p1(eta)*theta."""
    e = _check_eta(spec, eta)
    th = np.asarray(theta, dtype=float)
    return _out(spec.p0(e) + spec.p1(e) * th)


def internal_energy(spec: EosSpec, eta: Any, theta: Any) -> Any:
    """e = -P0(eta) + cV*theta."""
    e = _check_eta(spec, eta)
    th = np.asarray(theta, dtype=float)
    if np.any(th < 0):
        raise DomainError("theta must be nonnegative for the internal energy")
    return _out(-spec.P0(e) + spec.cV * th)


def free_energy(spec: EosSpec, eta: Any, theta: Any) -> Any:
    """Helmholtz potential -cV*theta*log(theta) - P0(eta) - P1(eta)*theta."""
    e = _check_eta(spec, eta)
    th = np.asarray(theta, dtype=float)
    if np.any(th <= 0):
        raise DomainError("theta must be positive for the free energy")
    return _out(-spec.cV * th * np.log(th) - spec.P0(e) - spec.P1(e) * th)


# ---------------------------------------------------------------------------
# Infimum pressure
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class InfimumResult:
    """m(theta_gamma) = inf over eta of p(eta, theta_gamma).

    ``argmin`` is ``inf`` when the infimum is the limit at large eta.
    ``unbounded`` is set (and ``value`` is ``-inf``) when the family allows
    p to decrease without bound and the samples do.
    """

    value: float
    argmin: float
    unbounded: bool = False
    at_boundary: bool = False

    def describe(self) -> str:
        if self.unbounded:
            return "unbounded below"
        where = "eta -> inf" if math.isinf(self.argmin) else f"eta = {self.argmin:.10g}"
        suffix = " (bracket edge)" if self.at_boundary else ""
        return f"{self.value:.10g} at {where}{suffix}"


def inf_pressure(
    spec: EosSpec,
    theta_gamma: float,
    bracket: Tuple[float, float],
    samples: int = 4096,
) -> InfimumResult:
    """Minimize p(., theta_gamma) on a log grid over *bracket*, then polish.

    A minimum in the interior is refined by golden-section search on the
    three grid points around it.
    """
    lo, hi = float(bracket[0]), float(bracket[1])
    if not 0 < lo < hi:
        raise DomainError(f"bracket must satisfy 0 < lo < hi, got ({lo}, {hi})")
    grid = np.geomspace(lo, hi, samples)
    values = np.asarray(pressure(spec, grid, theta_gamma), dtype=float)
    if not np.all(np.isfinite(values)):
        k = int(np.flatnonzero(~np.isfinite(values))[0])
        raise DomainError(f"pressure not finite at eta={grid[k]:.6g} inside bracket ({lo}, {hi})")

    k = int(np.argmin(values))
    if k == samples - 1 and values[-1] < values[-2]:
        if spec.family == "thermoviscoelastic":
            return InfimumResult(value=-math.inf, argmin=math.inf, unbounded=True)
        if values[-1] >= 0.0:
            # Nuclear laws have p -> 0 as eta -> inf.
            return InfimumResult(value=0.0, argmin=math.inf)
        logger.warning(
            "p(., %g) still decreasing and negative at bracket edge eta=%g; widen the bracket",
            theta_gamma,
            hi,
        )
        return InfimumResult(value=float(values[-1]), argmin=hi, at_boundary=True)
    if k == 0:
        return InfimumResult(value=float(values[0]), argmin=lo, at_boundary=True)

    def f(eta: float) -> float:
        return float(pressure(spec, eta, theta_gamma))

    value, argmin = float(values[k]), float(grid[k])
    try:
        res = minimize_scalar(f, bracket=(grid[k - 1], grid[k], grid[k + 1]), method="golden", tol=1e-10)
        if getattr(res, "success", True) and res.fun <= value and grid[k - 1] <= res.x <= grid[k + 1]:
            value, argmin = float(res.fun), float(res.x)
    except ValueError:
        logger.debug("golden-section polish skipped (flat bracket at eta=%g)", argmin)
    return InfimumResult(value=value, argmin=argmin)


# ---------------------------------------------------------------------------
# Condition-class validation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ValidationThresholds:
    """Finite-sample stand-ins for the asymptotic conditions."""

    p0_large: float = 10.0
    p0_small: float = 1.0e-2
    eta_p1_bound: float = 10.0
    sample_lo: float = 1.0e-3
    sample_hi: float = 1.0e3
    samples: int = 256
    tail_fraction: float = 0.05


@dataclass(frozen=True)
class ConditionCheck:
    name: str
    passed: bool
    witness: Optional[Dict[str, float]] = None
    detail: str = ""


@dataclass
class EosValidationReport:
    family: str
    checks: List[ConditionCheck] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failed(self) -> List[ConditionCheck]:
        return [c for c in self.checks if not c.passed]

    def format(self) -> str:
        lines = [f"family: {self.family}  result: {'PASS' if self.passed else 'FAIL'}"]
        for c in self.checks:
            line = f"  [{'ok' if c.passed else 'FAIL'}] {c.name}"
            if c.detail:
                line += f": {c.detail}"
            if c.witness and not c.passed:
                line += "  witness " + ", ".join(f"{k}={v:.6g}" for k, v in c.witness.items())
            lines.append(line)
        lines.extend(f"  warning: {w}" for w in self.warnings)
        return "\n".join(lines)


def _check(name: str, ok: bool, witness: Dict[str, float], detail: str) -> ConditionCheck:
    return ConditionCheck(name=name, passed=bool(ok), witness=witness, detail=detail)


def validate(
    spec: EosSpec,
    pS_min: float,
    pS_max: float,
    family: Optional[str] = None,
    thresholds: ValidationThresholds = ValidationThresholds(),
) -> EosValidationReport:
    """Check *spec* against the condition class of *family* (default: its own)."""
    if pS_min > pS_max:
        raise DomainError(f"pS_min ({pS_min}) exceeds pS_max ({pS_max})")
    family = family or spec.family
    report = EosValidationReport(family=family)
    th = thresholds

    if family == "nuclear":
        etas = np.geomspace(th.sample_lo, th.sample_hi, th.samples)
        p0 = spec.p0(etas)
        p1 = spec.p1(etas)

        head = float(p0[0])
        k_other = int(np.argmax(p0[1:])) + 1
        report.checks.append(
            _check(
                "p0 large at small eta",
                head > th.p0_large and head > p0[k_other],
                {"eta": float(etas[0]), "p0": head, "max_p0_elsewhere": float(p0[k_other])},
                f"p0({etas[0]:.3g}) = {head:.6g} must exceed {th.p0_large:g} and every other sample",
            )
        )

        n_tail = max(2, int(th.tail_fraction * th.samples))
        tail = np.abs(p0[-n_tail:])
        k = int(np.argmax(tail))
        report.checks.append(
            _check(
                "p0 -> 0 at large eta",
                tail[k] <= th.p0_small,
                {"eta": float(etas[-n_tail + k]), "p0": float(p0[-n_tail + k])},
                f"|p0| <= {th.p0_small:g} on the largest {n_tail} samples",
            )
        )

        k = int(np.argmin(p1))
        report.checks.append(
            _check(
                "p1 >= 0",
                p1[k] >= 0.0,
                {"eta": float(etas[k]), "p1": float(p1[k])},
                "p1 nonnegative on all samples",
            )
        )

        large = etas >= math.sqrt(th.sample_lo * th.sample_hi)
        ep1 = np.abs(etas[large] * p1[large])
        k = int(np.argmax(ep1))
        report.checks.append(
            _check(
                "eta*p1 bounded at large eta",
                ep1[k] <= th.eta_p1_bound,
                {"eta": float(etas[large][k]), "eta_p1": float(ep1[k])},
                f"|eta*p1| <= {th.eta_p1_bound:g} for eta >= {math.sqrt(th.sample_lo * th.sample_hi):.3g}",
            )
        )
        report.warnings.append(
            "limits at eta -> 0 and eta -> inf are checked at finite samples only "
            f"([{th.sample_lo:g}, {th.sample_hi:g}])"
        )

    elif family == "thermoviscoelastic":
        if spec.eta_check is None or spec.eta_hat is None:
            report.checks.append(
                ConditionCheck(
                    "eta_check/eta_hat declared",
                    False,
                    {"eta_check": float("nan"), "eta_hat": float("nan")},
                    "thermoviscoelastic conditions need eta_check and eta_hat",
                )
            )
            return report
        low = np.geomspace(min(th.sample_lo, spec.eta_check), spec.eta_check, th.samples)
        high = np.geomspace(spec.eta_hat, max(th.sample_hi, spec.eta_hat), th.samples)

        p0_low, p1_low = spec.p0(low), spec.p1(low)
        p0_high, p1_high = spec.p0(high), spec.p1(high)

        k = int(np.argmin(p0_low))
        report.checks.append(
            _check(
                "p0 >= pS_max for eta <= eta_check",
                p0_low[k] >= pS_max,
                {"eta": float(low[k]), "p0": float(p0_low[k]), "pS_max": float(pS_max)},
                f"min p0 on (0, {spec.eta_check:g}] = {p0_low[k]:.6g}",
            )
        )
        k = int(np.argmin(p1_low))
        report.checks.append(
            _check(
                "p1 >= 0 for eta <= eta_check",
                p1_low[k] >= 0.0,
                {"eta": float(low[k]), "p1": float(p1_low[k])},
                f"min p1 on (0, {spec.eta_check:g}] = {p1_low[k]:.6g}",
            )
        )
        k = int(np.argmax(p0_high))
        report.checks.append(
            _check(
                "p0 <= pS_min for eta >= eta_hat",
                p0_high[k] <= pS_min,
                {"eta": float(high[k]), "p0": float(p0_high[k]), "pS_min": float(pS_min)},
                f"max p0 on [{spec.eta_hat:g}, inf) = {p0_high[k]:.6g}",
            )
        )
        k = int(np.argmax(p1_high))
        report.checks.append(
            _check(
                "p1 <= 0 for eta >= eta_hat",
                p1_high[k] <= 0.0,
                {"eta": float(high[k]), "p1": float(p1_high[k])},
                f"max p1 on [{spec.eta_hat:g}, inf) = {p1_high[k]:.6g}",
            )
        )
        report.warnings.append(
            f"conditions checked on [{low[0]:g}, {spec.eta_check:g}] and "
            f"[{spec.eta_hat:g}, {high[-1]:g}] only"
        )
    else:
        raise DomainError(f"unknown family {family!r}")

    return report


# ---------------------------------------------------------------------------
# Plateau scan
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Plateau:
    eta_lo: float
    eta_hi: float
    level: float


def check_nondegeneracy(
    spec: EosSpec,
    theta_gamma: float,
    level_range: Tuple[float, float],
    bracket: Tuple[float, float],
    window: float,
    flat_tol: float,
    samples: int = 20001,
) -> List[Plateau]:
    """Flag eta-windows of width >= *window* where p(., theta_gamma) is flat.

    A window is flat when the oscillation of p over it is below *flat_tol*;
    only windows whose level lies in *level_range* are reported.  An empty
    list means no plateau is visible at this resolution.
    """
    c_lo, c_hi = level_range
    lo, hi = bracket
    if window > hi - lo:
        return []
    grid = np.linspace(lo, hi, samples)
    values = np.asarray(pressure(spec, grid, theta_gamma), dtype=float)

    plateaus: List[Plateau] = []
    i = 0
    n = len(grid)
    while i < n - 1:
        vmin = vmax = values[i]
        j = i
        while j + 1 < n:
            nxt = values[j + 1]
            if max(vmax, nxt) - min(vmin, nxt) >= flat_tol:
                break
            vmin, vmax = min(vmin, nxt), max(vmax, nxt)
            j += 1
        if j > i and grid[j] - grid[i] >= window:
            level = float(np.mean(values[i : j + 1]))
            if c_lo <= level <= c_hi:
                plateaus.append(Plateau(float(grid[i]), float(grid[j]), level))
            i = j + 1
        else:
            i += 1
    return plateaus


# ---------------------------------------------------------------------------
# Construction
# ---------------------------------------------------------------------------

_REQUIRED = ("family", "P0", "P1", "p0", "p1", "cV", "nu", "kappa_lo", "kappa_hi")


def eos_from_mapping(name: str, entry: Mapping[str, Any], verify: bool = True) -> EosSpec:
    """Build an :class:`EosSpec` from a registry entry or an inline config section."""
    errors: List[str] = []
    missing = [k for k in _REQUIRED if k not in entry]
    if missing:
        raise ConfigError([f"eos {name}: missing key(s) {missing}"])

    compiled: Dict[str, Expression] = {}
    for key in ("P0", "P1", "p0", "p1"):
        try:
            compiled[key] = compile_expression(entry[key], variables=("eta",))
        except ExpressionError as exc:
            errors.append(f"eos {name}.{key}: {exc}")
    try:
        compiled["kappa"] = compile_expression(entry.get("kappa", entry["kappa_lo"]), variables=("eta", "theta"))
    except ExpressionError as exc:
        errors.append(f"eos {name}.kappa: {exc}")

    def number(key: str, default: Any = None) -> Optional[float]:
        raw = entry.get(key, default)
        if raw is None:
            return None
        try:
            return float(raw)
        except (TypeError, ValueError):
            errors.append(f"eos {name}.{key}: expected a number, got {raw!r}")
            return None

    def pair(key: str, default: Sequence[float]) -> Tuple[float, float]:
        raw = entry.get(key, default)
        try:
            lo, hi = (float(v) for v in raw)
            return lo, hi
        except (TypeError, ValueError):
            errors.append(f"eos {name}.{key}: expected [lo, hi], got {raw!r}")
            return float(default[0]), float(default[1])

    scalars = {k: number(k) for k in ("cV", "nu", "kappa_lo", "kappa_hi", "eta_check", "eta_hat")}
    boxes = {
        "eval_bracket": pair("eval_bracket", (1.0e-8, 1.0e8)),
        "eta_box": pair("eta_box", (0.05, 50.0)),
        "theta_box": pair("theta_box", (0.01, 10.0)),
    }
    if errors:
        raise ConfigError(errors)

    spec = EosSpec(
        name=name,
        family=str(entry["family"]),
        description=str(entry.get("description", "")),
        **compiled,
        **scalars,
        **boxes,
    )
    if verify:
        problems = spec.verify_invariants()
        if problems:
            raise ConfigError([f"eos {name}: {msg}" for msg in problems])
    return spec


def load_registry(path: Path = REGISTRY_PATH) -> Dict[str, Dict[str, Any]]:
    with open(path, "r", encoding="utf-8") as fh:
        data = yaml.safe_load(fh) or {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping of law names")
    return data


def load_builtin(
    name: str,
    overrides: Optional[Mapping[str, Any]] = None,
    registry: Optional[Mapping[str, Mapping[str, Any]]] = None,
) -> EosSpec:
    """Return the built-in law *name*, with key-wise *overrides* applied."""
    registry = load_registry() if registry is None else registry
    if name not in registry:
        raise ConfigError(f"unknown built-in eos {name!r}; available: {sorted(registry)}")
    entry = dict(registry[name])
    entry.update(overrides or {})
    return eos_from_mapping(name, entry)
