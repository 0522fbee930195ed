"""Discrete fields on the staggered mass grid.

``eta`` and ``theta`` live at the n cells, ``v`` at the n+1 nodes with
``v[0] = 0`` pinned by the fixed wall.  Heat flux ``pi`` lives at nodes:
``pi[0]`` is the half-cell flux against the wall temperature and
``pi[n] = 0`` at the free end.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd

from scripts import eos
from scripts.domain import DomainSpec, Grid
from scripts.errors import ConfigError, DomainError, PositivityError
from scripts.expressions import Field

logger = logging.getLogger(__name__)

V_CLAMP_TOL = 1.0e-12


@dataclass(frozen=True)
class State:
    t: float
    eta: np.ndarray = field(repr=False)
    theta: np.ndarray = field(repr=False)
    v: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return len(self.eta)

    def validate(self) -> "State":
        check_positive("eta", self.eta)
        check_positive("theta", self.theta)
        if len(self.theta) != self.n or len(self.v) != self.n + 1:
            raise DomainError(
                f"field sizes inconsistent: eta {self.n}, theta {len(self.theta)}, v {len(self.v)}"
            )
        if self.v[0] != 0.0:
            raise DomainError(f"v at the wall must be 0, got {self.v[0]!r}")
        return self

    def with_time(self, t: float) -> "State":
        return replace(self, t=t)


def check_positive(name: str, values: np.ndarray, floor: Optional[np.ndarray] = None) -> None:
    bound = 0.0 if floor is None else floor
    bad = np.flatnonzero(~(values > bound))
    if bad.size:
        k = int(bad[0])
        raise PositivityError(name, k, float(values[k]))


@dataclass(frozen=True)
class DerivedFields:
    rho: np.ndarray
    p: np.ndarray
    sigma: np.ndarray
    pi: np.ndarray
    e: np.ndarray
    vx: np.ndarray


def velocity_gradient(v: np.ndarray, grid: Grid) -> np.ndarray:
    return np.diff(v) / grid.delta_m


def conductances(eta: np.ndarray, theta: np.ndarray, spec: eos.EosSpec, domain: DomainSpec) -> np.ndarray:
    """Face coefficients ``a_j`` with ``pi_j = a_j * (theta right - theta left)``.

    ``a[0]`` is the half-cell face against theta_gamma, ``a[n] = 0``.
    """
    dm = domain.grid.delta_m
    a = np.zeros(len(eta) + 1)
    th0 = 0.5 * (theta[0] + domain.theta_gamma)
    a[0] = spec.kappa(eta[0], th0) / eta[0] / (0.5 * dm)
    eta_bar = 0.5 * (eta[:-1] + eta[1:])
    theta_bar = 0.5 * (theta[:-1] + theta[1:])
    a[1:-1] = spec.kappa(eta_bar, theta_bar) / eta_bar / dm
    return a


def heat_flux(a: np.ndarray, theta: np.ndarray, theta_gamma: float) -> np.ndarray:
    pi = np.zeros_like(a)
    pi[0] = a[0] * (theta[0] - theta_gamma)
    pi[1:-1] = a[1:-1] * np.diff(theta)
    return pi


def derived(state: State, spec: eos.EosSpec, domain: DomainSpec) -> DerivedFields:
    """Density, pressure, stress, heat flux and internal energy of *state*."""
    check_positive("eta", state.eta)
    check_positive("theta", state.theta)
    grid = domain.grid
    rho = 1.0 / state.eta
    p = np.asarray(eos.pressure(spec, state.eta, state.theta))
    vx = velocity_gradient(state.v, grid)
    sigma = spec.nu * vx * rho - p
    pi = heat_flux(conductances(state.eta, state.theta, spec, domain), state.theta, domain.theta_gamma)
    e = np.asarray(eos.internal_energy(spec, state.eta, state.theta))
    return DerivedFields(rho=rho, p=p, sigma=sigma, pi=pi, e=e, vx=vx)


def eulerian_positions(state: State, grid: Grid) -> np.ndarray:
    """Physical node positions y_j = sum of eta*dm up to node j."""
    return np.concatenate(([0.0], np.cumsum(state.eta * grid.delta_m)))


def velocity_at_centers(v: np.ndarray) -> np.ndarray:
    return 0.5 * (v[:-1] + v[1:])


# ---------------------------------------------------------------------------
# Initial data
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class InitialProfiles:
    eta: Field
    theta: Field
    v: Field


def initialize(
    profiles: InitialProfiles,
    grid: Grid,
    domain: DomainSpec,
    theta_tol: float = 1.0e-8,
) -> Tuple[State, List[str]]:
    """Sample the initial profiles: cell fields at centres, v at nodes.

    Returns the state and the list of compatibility warnings.
    """
    warnings: List[str] = []
    eta = np.asarray(profiles.eta(grid.centers), dtype=float)
    theta = np.asarray(profiles.theta(grid.centers), dtype=float)
    v = np.asarray(profiles.v(grid.nodes), dtype=float).copy()
    check_positive("eta", eta)
    check_positive("theta", theta)
    if not np.all(np.isfinite(v)):
        k = int(np.flatnonzero(~np.isfinite(v))[0])
        raise DomainError(f"initial v is not finite at node {k}")

    if abs(v[0]) > V_CLAMP_TOL:
        warnings.append(f"v0(0) = {v[0]:.6g} clamped to 0 at the wall")
    v[0] = 0.0

    theta_wall = float(profiles.theta(0.0))
    if abs(theta_wall - domain.theta_gamma) > theta_tol:
        warnings.append(
            f"theta0(0) = {theta_wall:.6g} differs from theta_gamma = {domain.theta_gamma:.6g}"
        )
    for w in warnings:
        logger.warning("initial data: %s", w)
    return State(t=0.0, eta=eta, theta=theta, v=v), warnings


def load_profile(path: Path, grid: Grid) -> State:
    """Rebuild a state from a ``profile_t*.csv`` snapshot of a previous run."""
    try:
        df = pd.read_csv(path, float_precision="round_trip")
    except (OSError, pd.errors.ParserError) as exc:
        raise ConfigError(f"cannot read profile {path}: {exc}") from exc
    required = {"x", "eta", "theta", "v", "v_right"}
    missing = required - set(df.columns)
    if missing:
        raise ConfigError(f"profile {path} lacks column(s) {sorted(missing)}")
    if len(df) != grid.n:
        raise ConfigError(f"profile {path} has {len(df)} cells, the grid has {grid.n}")
    eta = df["eta"].to_numpy(dtype=float)
    theta = df["theta"].to_numpy(dtype=float)
    check_positive("eta", eta)
    check_positive("theta", theta)
    v = np.zeros(grid.n + 1)
    v[1:] = df["v_right"].to_numpy(dtype=float)
    if not np.allclose(velocity_at_centers(v), df["v"].to_numpy(dtype=float), rtol=1e-9, atol=1e-12):
        logger.warning("profile %s: centre velocities disagree with v_right column", path)
    # Restarted data is initial data: the clock starts again at 0.
    return State(t=0.0, eta=eta, theta=theta, v=v)
