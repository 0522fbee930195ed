"""Time stepping for the Lagrangian system.

One step solves, in order and with coefficients frozen at the latest
iterate (eta~, theta~, v~):

1. a linear parabolic problem for theta (backward Euler, Dirichlet theta_gamma
   at the wall, no flux at the free end),
2. a linear parabolic problem for v with the pressure p(eta~, theta_new)
   (v = 0 at the wall, stress -p_gamma at the free end),
3. the continuity update eta = eta_old + dt*v_x.

The three solves are repeated as a Picard loop until the iterate stops
changing.  Failed steps are retried with half the step.  With
``time_order = 2`` each step combines one full and two half backward-Euler
steps as ``2*fine - coarse``, which is second order in dt.  A forward-Euler
step built from the same spatial operators serves as an oracle.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Callable, Dict, List, Optional, Tuple

import numpy as np

from scripts import diagnostics, eos, tridiag
from scripts.domain import DomainSpec, Grid
from scripts.errors import (
    ConfigError,
    DomainError,
    PicardNotConverged,
    PositivityError,
    SolverError,
    StepFailure,
)
from scripts.state import (
    State,
    check_positive,
    conductances,
    derived,
    velocity_gradient,
)

if TYPE_CHECKING:
    from scripts.run_config import RunConfig

logger = logging.getLogger(__name__)

SourceFn = Callable[[float, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class StepParams:
    dt: float = 1.0e-3
    dt_min: float = 1.0e-10
    dt_max: float = 1.0e-1
    picard_tol: float = 1.0e-10
    picard_max: int = 30
    positivity_floor: float = 1.0e-3
    t_end: float = 1.0
    output_stride: int = 1
    growth: float = 1.2
    grow_sweeps: int = 2
    time_order: int = 1

    def __post_init__(self) -> None:
        problems: List[str] = []
        if not (0 < self.dt_min <= self.dt <= self.dt_max):
            problems.append("solver needs 0 < dt_min <= dt <= dt_max")
        if not self.picard_tol > 0:
            problems.append("picard_tol must be positive")
        if self.picard_max < 1:
            problems.append("picard_max must be >= 1")
        if not (0 <= self.positivity_floor < 1):
            problems.append("positivity_floor must lie in [0, 1)")
        if not self.t_end >= 0:
            problems.append("t_end must be >= 0")
        if self.output_stride < 1:
            problems.append("output_stride must be >= 1")
        if not self.growth >= 1:
            problems.append("growth must be >= 1")
        if self.time_order not in (1, 2):
            problems.append("time_order must be 1 or 2")
        if problems:
            raise ConfigError(problems)


@dataclass(frozen=True)
class StepOutcome:
    accepted: bool
    sweeps: int
    dt_used: float
    dt_next: float
    max_change: float
    retries: int
    contraction_violations: int = 0


# ---------------------------------------------------------------------------
# Sub-solves
# ---------------------------------------------------------------------------


def theta_solve(
    frozen: State,
    v_new: np.ndarray,
    spec: eos.EosSpec,
    domain: DomainSpec,
    dt: float,
    previous: Optional[State] = None,
    source: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Backward-Euler temperature update with coefficients frozen at *frozen*.

    Cell i balances ``cV*dm*(theta_i - theta_old_i)/dt`` against the face
    fluxes, viscous heating ``nu*v_x^2/eta~`` and the work term
    ``p1(eta~)*theta_i*v_x`` taken at the new temperature.  *source* is an
    optional volumetric heating per unit mass.
    """
    previous = frozen if previous is None else previous
    grid = domain.grid
    dm = grid.delta_m
    eta = frozen.eta
    a = conductances(eta, frozen.theta, spec, domain)
    vx = velocity_gradient(v_new, grid)
    mass = spec.cV * dm / dt

    diag = mass + a[:-1] + a[1:] + dm * spec.p1(eta) * vx
    lower = -a[:-1].copy()
    upper = -a[1:].copy()
    rhs = mass * previous.theta + dm * spec.nu * vx**2 / eta
    rhs[0] += a[0] * domain.theta_gamma
    if source is not None:
        rhs = rhs + dm * np.asarray(source, dtype=float)
    return tridiag.solve(lower, diag, upper, rhs)


def velocity_solve(
    frozen: State,
    theta_new: np.ndarray,
    spec: eos.EosSpec,
    domain: DomainSpec,
    dt: float,
    previous: Optional[State] = None,
) -> np.ndarray:
    """Backward-Euler velocity update implicit in the viscous stress.

    Unknowns are v_1..v_n; v_0 = 0.  Node n owns the half control volume
    [M - dm/2, M] and sees the outer stress -p_gamma.
    """
    previous = frozen if previous is None else previous
    grid = domain.grid
    dm = grid.delta_m
    n = grid.n
    b = spec.nu / (dm * frozen.eta)
    P = np.asarray(eos.pressure(spec, frozen.eta, theta_new))
    g = domain.node_forcing
    w = grid.node_weights[1:]
    mass = w * dm / dt

    diag = mass.copy()
    diag[:-1] += b[1:] + b[:-1]
    diag[-1] += b[-1]
    lower = np.zeros(n)
    lower[1:] = -b[1:]
    upper = np.zeros(n)
    upper[:-1] = -b[1:]

    rhs = mass * previous.v[1:] + w * g[1:] * dm
    rhs[:-1] += P[:-1] - P[1:]
    rhs[-1] += P[-1] - domain.p_gamma

    v = np.zeros(n + 1)
    v[1:] = tridiag.solve(lower, diag, upper, rhs)
    return v


def eta_update(
    eta_old: np.ndarray, v_new: np.ndarray, dt: float, grid: Grid, floor: float = 0.0
) -> np.ndarray:
    """Discrete continuity: eta += dt*(v_{i+1} - v_i)/dm."""
    eta = eta_old + dt * np.diff(v_new) / grid.delta_m
    check_positive("eta", eta, floor * eta_old)
    return eta


def istar(v: np.ndarray, grid: Grid) -> np.ndarray:
    """Integral of v from each cell centre to M, over the momentum control volumes."""
    wv = grid.node_weights * v * grid.delta_m
    tail = np.cumsum(wv[::-1])[::-1]
    return tail[1:]


def log_form_eta_update(
    eta_old: np.ndarray,
    prev: State,
    new: State,
    spec: eos.EosSpec,
    domain: DomainSpec,
    dt: float,
) -> np.ndarray:
    """Specific volume from the integrated momentum balance.

    nu*log(eta_new/eta_old) = dt*(p - p_S) - [I*v]_old^new, with p at the
    new level.  Agrees with :func:`eta_update` to O(dt^2) per step.
    """
    grid = domain.grid
    p = np.asarray(eos.pressure(spec, new.eta, new.theta))
    jump = istar(new.v, grid) - istar(prev.v, grid)
    return eta_old * np.exp((dt * (p - domain.stationary.values) - jump) / spec.nu)


# ---------------------------------------------------------------------------
# Picard step
# ---------------------------------------------------------------------------


def _relative_change(old: Tuple[np.ndarray, ...], new: Tuple[np.ndarray, ...]) -> float:
    eta0, theta0, v0 = old
    eta1, theta1, v1 = new
    return max(
        float(np.max(np.abs(eta1 - eta0)) / np.max(np.abs(eta1))),
        float(np.max(np.abs(theta1 - theta0)) / np.max(np.abs(theta1))),
        float(np.max(np.abs(v1 - v0)) / max(float(np.max(np.abs(v1))), 1.0)),
    )


def _picard(
    state: State,
    spec: eos.EosSpec,
    domain: DomainSpec,
    params: StepParams,
    dt: float,
    source: Optional[SourceFn],
) -> Tuple[State, int, float, int]:
    grid = domain.grid
    floor = params.positivity_floor
    it = (state.eta, state.theta, state.v)
    heat = None if source is None else source(state.t + dt, grid.centers)
    last = math.inf
    violations = 0
    for sweep in range(1, params.picard_max + 1):
        frozen = State(state.t, *it)
        theta = theta_solve(frozen, it[2], spec, domain, dt, previous=state, source=heat)
        check_positive("theta", theta, floor * state.theta)
        v = velocity_solve(frozen, theta, spec, domain, dt, previous=state)
        eta = eta_update(state.eta, v, dt, grid, floor)
        change = _relative_change(it, (eta, theta, v))
        if change > last:
            violations += 1
            logger.debug("t=%.6g sweep %d: change grew %.3e -> %.3e", state.t, sweep, last, change)
        logger.debug("t=%.6g dt=%.3e sweep %d change %.3e", state.t, dt, sweep, change)
        it = (eta, theta, v)
        last = change
        if change < params.picard_tol:
            return State(state.t + dt, eta, theta, v), sweep, change, violations
    raise PicardNotConverged(params.picard_max, last)


def _extrapolated(
    state: State,
    spec: eos.EosSpec,
    domain: DomainSpec,
    params: StepParams,
    dt: float,
    source: Optional[SourceFn],
) -> Tuple[State, int, float, int]:
    coarse, sweeps, change, violations = _picard(state, spec, domain, params, dt, source)
    half, s1, c1, v1 = _picard(state, spec, domain, params, 0.5 * dt, source)
    fine, s2, c2, v2 = _picard(half, spec, domain, params, 0.5 * dt, source)
    sweeps, change, violations = max(sweeps, s1, s2), max(change, c1, c2), violations + v1 + v2

    eta = 2.0 * fine.eta - coarse.eta
    theta = 2.0 * fine.theta - coarse.theta
    v = 2.0 * fine.v - coarse.v
    try:
        check_positive("eta", eta, params.positivity_floor * state.eta)
        check_positive("theta", theta, params.positivity_floor * state.theta)
    except PositivityError as exc:
        logger.debug("t=%.6g: extrapolation dropped (%s); keeping the half steps", state.t, exc)
        return State(state.t + dt, fine.eta, fine.theta, fine.v), sweeps, change, violations
    return State(state.t + dt, eta, theta, v), sweeps, change, violations


def step(
    state: State,
    spec: eos.EosSpec,
    domain: DomainSpec,
    params: StepParams,
    source: Optional[SourceFn] = None,
) -> Tuple[State, StepOutcome]:
    """Advance *state* by ``params.dt`` (halved on failure, down to ``dt_min``).

    *source* adds a heat source per unit mass, evaluated at the new time and
    the cell centres.
    """
    advance = _extrapolated if params.time_order == 2 else _picard
    dt = params.dt
    retries = 0
    while True:
        try:
            new, sweeps, change, violations = advance(state, spec, domain, params, dt, source)
            break
        except (PositivityError, SolverError, DomainError) as exc:
            retries += 1
            dt *= 0.5
            logger.info("t=%.6g: step rejected (%s); retry with dt=%.3e", state.t, exc, dt)
            if dt < params.dt_min:
                raise StepFailure(
                    f"dt fell below dt_min={params.dt_min:g} at t={state.t:.10g}: {exc}",
                    last_state=state,
                    t=state.t,
                ) from exc
    if violations:
        logger.warning(
            "t=%.6g: Picard change grew in %d of %d sweeps", state.t, violations, sweeps
        )
    dt_next = min(dt * params.growth, params.dt_max) if sweeps <= params.grow_sweeps else dt
    outcome = StepOutcome(
        accepted=True,
        sweeps=sweeps,
        dt_used=dt,
        dt_next=max(dt_next, params.dt_min),
        max_change=change,
        retries=retries,
        contraction_violations=violations,
    )
    return new, outcome


# ---------------------------------------------------------------------------
# Explicit oracle
# ---------------------------------------------------------------------------


def explicit_dt_limit(state: State, spec: eos.EosSpec, domain: DomainSpec, safety: float = 0.9) -> float:
    """Forward-Euler step bound.

    dt <= safety * dm^2 * min(eta) * min(1/(2*nu), cV/(4*kappa_hi)).
    The viscous factor covers the half control volume at x = M; the thermal
    factor covers the half-cell face at the wall.
    """
    dm = domain.grid.delta_m
    return safety * dm**2 * float(np.min(state.eta)) * min(1.0 / (2.0 * spec.nu), spec.cV / (4.0 * spec.kappa_hi))


def explicit_oracle_step(state: State, spec: eos.EosSpec, domain: DomainSpec, dt: float) -> State:
    """Forward-Euler step of all three equations with the spatial operators of :func:`derived`."""
    grid = domain.grid
    dm = grid.delta_m
    fields = derived(state, spec, domain)
    vx = fields.vx

    heating = spec.nu * vx**2 / state.eta - spec.p1(state.eta) * state.theta * vx
    theta = state.theta + dt / spec.cV * (np.diff(fields.pi) / dm + heating)

    g = domain.node_forcing
    force = np.zeros(grid.n + 1)
    force[1:-1] = (fields.sigma[1:] - fields.sigma[:-1]) / dm + g[1:-1]
    force[-1] = (-domain.p_gamma - fields.sigma[-1]) / (0.5 * dm) + g[-1]
    v = state.v + dt * force
    v[0] = 0.0

    eta = state.eta + dt * vx
    check_positive("eta", eta)
    check_positive("theta", theta)
    return State(state.t + dt, eta, theta, v)


# ---------------------------------------------------------------------------
# Run driver
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StopRule:
    """Stabilization thresholds held for a dwell of ``dwell_fraction`` of the elapsed time."""

    v_l2: float = 1.0e-3
    theta_l2: float = 1.0e-3
    pressure_l2: float = 1.0e-3
    dwell_fraction: float = 0.1
    min_dwell: float = 0.0
    enabled: bool = True

    def below(self, record: diagnostics.DiagRecord) -> bool:
        return (
            record.v_l2 <= self.v_l2
            and record.theta_l2 <= self.theta_l2
            and record.pressure_l2 <= self.pressure_l2
        )


@dataclass
class RunResult:
    final: State
    trajectory: List[diagnostics.DiagRecord]
    snapshots: Dict[float, State]
    stop_reason: str
    steps: int = 0
    warnings: List[str] = field(default_factory=list)
    lyapunov_violations: List[Tuple[float, float]] = field(default_factory=list)
    max_balance_residual: float = 0.0
    contraction_violations: int = 0
    retries: int = 0
    failure: Optional[str] = None


def run(config: "RunConfig") -> RunResult:
    """Integrate from t = 0 until t_end, stabilization or step failure.

    On step failure a :class:`StepFailure` is raised whose ``partial``
    attribute holds the :class:`RunResult` up to the last accepted state.
    """
    spec, domain = config.eos, config.domain
    params = config.solver
    stop = config.stop_rule
    q_list = config.q_list
    state = config.initial_state
    t_end = params.t_end
    eps = 1.0e-12 * max(1.0, t_end)

    pending = sorted(t for t in config.snapshot_times if 0.0 <= t <= t_end)
    snapshots: Dict[float, State] = {}
    if pending and pending[0] <= eps:
        snapshots[pending.pop(0)] = state

    record = diagnostics.make_record(state, spec, domain, q_list=q_list)
    trajectory = [record]
    result = RunResult(final=state, trajectory=trajectory, snapshots=snapshots, stop_reason="t_end",
                       warnings=list(config.initial_warnings))
    tol_E = config.lyapunov_tol_factor * max(1.0, abs(record.E))
    E_prev = record.E
    below_since: Optional[float] = 0.0 if stop.enabled and stop.below(record) else None

    logger.info("run %s: n=%d t_end=%g dt=%g", config.name, domain.n, t_end, params.dt)
    dt_proposed = params.dt
    while state.t < t_end - eps:
        prior = dt_proposed
        dt = min(dt_proposed, t_end - state.t)
        clipped = dt < dt_proposed
        if pending and pending[0] - state.t < dt:
            dt = pending[0] - state.t
            clipped = True
        # a remainder shorter than dt_min is still taken exactly
        step_params = replace(params, dt=dt, dt_min=min(params.dt_min, dt))
        try:
            new, outcome = step(state, spec, domain, step_params)
        except StepFailure as exc:
            logger.error("run %s stopped: %s", config.name, exc)
            result.final = state
            result.stop_reason = "step_failure"
            result.failure = str(exc)
            if trajectory[-1].t != state.t:
                trajectory.append(diagnostics.make_record(state, spec, domain, q_list=q_list))
            exc.partial = result
            raise

        residual = diagnostics.energy_balance(state, new, spec, domain, outcome.dt_used)
        result.max_balance_residual = max(result.max_balance_residual, abs(residual))
        result.contraction_violations += outcome.contraction_violations
        result.retries += outcome.retries
        result.steps += 1
        E_next = diagnostics.lyapunov(new, spec, domain)
        D_next = diagnostics.dissipation(new, spec, domain)
        excess = diagnostics.lyapunov_excess(E_prev, E_next, D_next, outcome.dt_used, tol_E)
        if excess > 0:
            result.lyapunov_violations.append((new.t, excess))
            logger.warning("t=%.6g: Lyapunov increase exceeds tolerance by %.3e", new.t, excess)
        E_prev = E_next
        state = new

        while pending and pending[0] <= state.t + eps:
            snapshots[pending.pop(0)] = state

        done = state.t >= t_end - eps
        if result.steps % params.output_stride == 0 or done:
            record = diagnostics.make_record(state, spec, domain, outcome.dt_used, residual, q_list)
            trajectory.append(record)
            if stop.enabled:
                if stop.below(record):
                    below_since = state.t if below_since is None else below_since
                    held = state.t - below_since
                    if held > 0 and held >= stop.dwell_fraction * state.t and held >= stop.min_dwell:
                        result.stop_reason = "stabilized"
                        logger.info("run %s stabilized at t=%.6g", config.name, state.t)
                        break
                else:
                    below_since = None

        dt_proposed = outcome.dt_next
        if clipped and outcome.retries == 0:
            dt_proposed = max(dt_proposed, prior)

    result.final = state
    logger.info(
        "run %s finished: %s at t=%.6g after %d steps", config.name, result.stop_reason, state.t, result.steps
    )
    return result
