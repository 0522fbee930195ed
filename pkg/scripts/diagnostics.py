"""Energy, dissipation, norms and trajectory checks.

Quadrature follows the staggered layout: cell quantities are weighted by
``dm``; node quantities by the trapezoid weights (``dm/2`` at both ends),
which are also the control volumes of the momentum balance.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from scripts import eos
from scripts.domain import DomainSpec, StationaryPressure
from scripts.errors import DomainError
from scripts.state import State, conductances, heat_flux, velocity_gradient

logger = logging.getLogger(__name__)

BASE_COLUMNS = (
    "t",
    "dt",
    "E",
    "D",
    "V",
    "v_l2",
    "v2_l2",
    "v_l4",
    "theta_l2",
    "pressure_l2",
    "pressure_max",
    "eta_min",
    "eta_max",
    "balance_residual",
    "v_integral",
    "eta_cell1",
)


def _q_label(q: float) -> str:
    if math.isinf(q):
        return "v_linf"
    return f"v_l{q:g}"


@dataclass
class DiagRecord:
    t: float
    dt: float
    E: float
    D: float
    V: float
    v_l2: float
    v2_l2: float
    v_l4: float
    theta_l2: float
    pressure_l2: float
    pressure_max: float
    eta_min: float
    eta_max: float
    balance_residual: float
    v_integral: float
    eta_cell1: float
    v_lq: Dict[str, float] = field(default_factory=dict)

    def to_row(self) -> Dict[str, float]:
        row = {k: v for k, v in asdict(self).items() if k != "v_lq"}
        row.update(self.v_lq)
        return row


@dataclass(frozen=True)
class NormSet:
    v_l2: float
    v2_l2: float
    v_l4: float
    theta_l2: float
    pressure_l2: float
    pressure_max: float
    V: float
    eta_min: float
    eta_max: float
    v_integral: float
    v_lq: Dict[str, float]


def _pS_values(domain: DomainSpec, pS: Optional[StationaryPressure | np.ndarray]) -> np.ndarray:
    if pS is None:
        return domain.stationary.values
    if isinstance(pS, StationaryPressure):
        return pS.values
    return np.asarray(pS, dtype=float)


# ---------------------------------------------------------------------------
# Energy functionals
# ---------------------------------------------------------------------------


def kinetic_energy(state: State, domain: DomainSpec) -> float:
    grid = domain.grid
    return float(0.5 * grid.delta_m * np.sum(grid.node_weights * state.v**2))


def total_energy(state: State, spec: eos.EosSpec, domain: DomainSpec) -> float:
    """Kinetic plus internal energy."""
    e = np.asarray(eos.internal_energy(spec, state.eta, state.theta))
    return kinetic_energy(state, domain) + float(domain.grid.delta_m * np.sum(e))


def lyapunov(
    state: State,
    spec: eos.EosSpec,
    domain: DomainSpec,
    pS: Optional[StationaryPressure | np.ndarray] = None,
) -> float:
    """Lyapunov functional with the additive constant fixed to 0.

    Integrand: v^2/2 + cV*theta_gamma*(a - log a) + pS*eta - P(eta, theta_gamma),
    a = theta/theta_gamma; v^2 at a cell is the mean of its two node values.
    """
    if not np.all(state.theta > 0):
        raise DomainError("theta must be positive for the Lyapunov functional")
    dm = domain.grid.delta_m
    tg = domain.theta_gamma
    ratio = state.theta / tg
    potential = spec.P0(state.eta) + spec.P1(state.eta) * tg
    integrand = (
        0.25 * (state.v[:-1] ** 2 + state.v[1:] ** 2)
        + spec.cV * tg * (ratio - np.log(ratio))
        + _pS_values(domain, pS) * state.eta
        - potential
    )
    return float(dm * np.sum(integrand))


def dissipation(state: State, spec: eos.EosSpec, domain: DomainSpec) -> float:
    """theta_gamma * integral of (nu*rho*v_x^2/theta + kappa*rho*theta_x^2/theta^2)."""
    if not np.all(state.theta > 0):
        raise DomainError("theta must be positive for the dissipation")
    dm = domain.grid.delta_m
    tg = domain.theta_gamma
    vx = velocity_gradient(state.v, domain.grid)
    viscous = dm * np.sum(spec.nu * vx**2 / (state.eta * state.theta))

    a = conductances(state.eta, state.theta, spec, domain)
    left = np.concatenate(([tg], state.theta[:-1]))
    face_theta = 0.5 * (left + state.theta)
    thermal = np.sum(a[:-1] * (state.theta - left) ** 2 / face_theta**2)
    return float(tg * (viscous + thermal))


def energy_balance(
    prev: State,
    next: State,
    spec: eos.EosSpec,
    domain: DomainSpec,
    dt: float,
    level: str = "next",
) -> float:
    """Defect of the integrated total-energy identity over one step.

    The boundary work ``-p_gamma*v(M)``, the wall heat flux ``-pi(0)`` and the
    body-force work are evaluated at *level* (``"next"`` for the implicit
    scheme, ``"prev"`` for forward Euler).
    """
    if level not in ("next", "prev"):
        raise ValueError("level must be 'next' or 'prev'")
    ref = next if level == "next" else prev
    grid = domain.grid
    a = conductances(ref.eta, ref.theta, spec, domain)
    pi0 = heat_flux(a, ref.theta, domain.theta_gamma)[0]
    force_work = grid.delta_m * np.sum(grid.node_weights * domain.node_forcing * ref.v)
    supply = -domain.p_gamma * ref.v[-1] - pi0 + force_work
    return float(total_energy(next, spec, domain) - total_energy(prev, spec, domain) - dt * supply)


# ---------------------------------------------------------------------------
# Norms
# ---------------------------------------------------------------------------


def norms(
    state: State,
    spec: eos.EosSpec,
    domain: DomainSpec,
    pS: Optional[StationaryPressure | np.ndarray] = None,
    q_list: Sequence[float] = (4.0,),
) -> NormSet:
    grid = domain.grid
    dm = grid.delta_m
    w = grid.node_weights * dm
    av = np.abs(state.v)

    def v_lq(q: float) -> float:
        if math.isinf(q):
            return float(np.max(av))
        return float(np.sum(w * av**q) ** (1.0 / q))

    lq: Dict[str, float] = {}
    for q in q_list:
        if not (q >= 1.0):
            raise DomainError(f"norm exponent must be >= 1, got {q}")
        lq[_q_label(q)] = v_lq(q)
    lq.pop("v_l4", None)

    p = np.asarray(eos.pressure(spec, state.eta, state.theta))
    dp = p - _pS_values(domain, pS)
    return NormSet(
        v_l2=v_lq(2.0),
        v2_l2=float(np.sqrt(np.sum(w * state.v**4))),
        v_l4=v_lq(4.0),
        theta_l2=float(np.sqrt(dm * np.sum((state.theta - domain.theta_gamma) ** 2))),
        pressure_l2=float(np.sqrt(dm * np.sum(dp**2))),
        pressure_max=float(np.max(np.abs(dp))),
        V=float(dm * np.sum(state.eta)),
        eta_min=float(np.min(state.eta)),
        eta_max=float(np.max(state.eta)),
        v_integral=float(np.sum(w * state.v)),
        v_lq=lq,
    )


def make_record(
    state: State,
    spec: eos.EosSpec,
    domain: DomainSpec,
    dt: float = 0.0,
    balance_residual: float = 0.0,
    q_list: Sequence[float] = (4.0,),
) -> DiagRecord:
    ns = norms(state, spec, domain, None, q_list)
    return DiagRecord(
        t=state.t,
        dt=dt,
        E=lyapunov(state, spec, domain),
        D=dissipation(state, spec, domain),
        V=ns.V,
        v_l2=ns.v_l2,
        v2_l2=ns.v2_l2,
        v_l4=ns.v_l4,
        theta_l2=ns.theta_l2,
        pressure_l2=ns.pressure_l2,
        pressure_max=ns.pressure_max,
        eta_min=ns.eta_min,
        eta_max=ns.eta_max,
        balance_residual=balance_residual,
        v_integral=ns.v_integral,
        eta_cell1=float(state.eta[0]),
        v_lq=dict(ns.v_lq),
    )


def columns(q_list: Sequence[float]) -> List[str]:
    extra = [_q_label(q) for q in q_list if _q_label(q) != "v_l4"]
    return list(BASE_COLUMNS) + extra


# ---------------------------------------------------------------------------
# Trajectory checks
# ---------------------------------------------------------------------------


def lyapunov_excess(E_prev: float, E_next: float, D_next: float, dt: float, tol: float) -> float:
    """Positive when E_next - E_prev exceeds -dt*D_next + tol."""
    return (E_next - E_prev) - (-dt * D_next + tol)


def check_lyapunov_monotone(
    trajectory: Sequence[DiagRecord], tol: Optional[float] = None
) -> List[Tuple[int, float]]:
    """Records violating E_next - E_prev <= -dt*D_next + tol.

    Consecutive records must be consecutive steps (output stride 1).
    Default tol is 1e-6*max(1, |E_0|).
    """
    if not trajectory:
        return []
    if tol is None:
        tol = 1.0e-6 * max(1.0, abs(trajectory[0].E))
    bad: List[Tuple[int, float]] = []
    for k in range(1, len(trajectory)):
        prev, nxt = trajectory[k - 1], trajectory[k]
        excess = lyapunov_excess(prev.E, nxt.E, nxt.D, nxt.t - prev.t, tol)
        if excess > 0:
            bad.append((k, excess))
    return bad


def _slope(t: np.ndarray, y: np.ndarray) -> float:
    if len(t) < 2 or np.ptp(t) == 0:
        return 0.0
    return float(np.polyfit(t, y, 1)[0])


@dataclass(frozen=True)
class EtaBounds:
    early_min: float
    overall_min: float
    min_ok: bool
    max_slope: float
    max_ok: bool


def eta_bounds_check(trajectory: Sequence[DiagRecord], rel_tol: float = 1.0e-3) -> EtaBounds:
    """Two-sided eta bounds: no collapse of min eta, no growth trend of max eta.

    min eta over the run must stay >= half its value over the first 10% of
    the run; the least-squares slope of max eta over the final half must be
    <= rel_tol * mean(max eta) / duration.
    """
    t = np.array([r.t for r in trajectory])
    mins = np.array([r.eta_min for r in trajectory])
    maxs = np.array([r.eta_max for r in trajectory])
    t_end = t[-1]
    early = t <= t[0] + 0.1 * (t_end - t[0])
    early_min = float(np.min(mins[early]))
    overall_min = float(np.min(mins))
    late = t >= t[0] + 0.5 * (t_end - t[0])
    slope = _slope(t[late], maxs[late])
    duration = max(float(t_end - t[0]), 1.0e-300)
    allowed = rel_tol * float(np.mean(maxs[late])) / duration
    return EtaBounds(
        early_min=early_min,
        overall_min=overall_min,
        min_ok=overall_min >= 0.5 * early_min,
        max_slope=slope,
        max_ok=slope <= allowed,
    )


@dataclass(frozen=True)
class ExpansionReport:
    growth_ratio: float
    t1: float
    log_v_slope: float


def expansion_report(trajectory: Sequence[DiagRecord]) -> ExpansionReport:
    """Largest V(2*T1)/V(T1) over recorded T1 and the log V slope over the final third."""
    t = np.array([r.t for r in trajectory])
    V = np.array([r.V for r in trajectory])
    best, t1_best = 1.0, 0.0
    for t1, v1 in zip(t, V):
        if t1 <= 0 or 2.0 * t1 > t[-1]:
            continue
        ratio = float(np.interp(2.0 * t1, t, V)) / v1
        if ratio > best:
            best, t1_best = ratio, float(t1)
    tail = t >= t[0] + (2.0 / 3.0) * (t[-1] - t[0])
    return ExpansionReport(growth_ratio=best, t1=t1_best, log_v_slope=_slope(t[tail], np.log(V[tail])))


@dataclass(frozen=True)
class WallIndicators:
    eta_cell1_slope: float
    eta_cell1_increasing: bool
    v_integral_initial: float
    v_integral_max: float
    v_integral_ratio: float

    @property
    def either_holds(self) -> bool:
        return self.eta_cell1_increasing or self.v_integral_ratio > 10.0


def wall_indicators(trajectory: Sequence[DiagRecord]) -> WallIndicators:
    """Indicators for a vanishing stationary pressure at the wall.

    Either eta at the first cell keeps growing, or the total momentum
    |integral of v| grows well past its initial scale.
    """
    t = np.array([r.t for r in trajectory])
    eta1 = np.array([r.eta_cell1 for r in trajectory])
    vint = np.abs(np.array([r.v_integral for r in trajectory]))
    tail = t >= t[0] + (2.0 / 3.0) * (t[-1] - t[0])
    increasing = bool(len(eta1[tail]) >= 2 and np.all(np.diff(eta1[tail]) > 0))
    scale = max(float(vint[0]), 1.0e-12)
    return WallIndicators(
        eta_cell1_slope=_slope(t[tail], eta1[tail]),
        eta_cell1_increasing=increasing,
        v_integral_initial=float(vint[0]),
        v_integral_max=float(np.max(vint)),
        v_integral_ratio=float(np.max(vint)) / scale,
    )
