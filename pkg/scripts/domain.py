"""Mass interval, uniform mass grid and the stationary pressure profile."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import List, Optional

import numpy as np

from scripts.errors import ConfigError, DomainError
from scripts.expressions import Field, PiecewiseConstant, compile_expression

DEFAULT_REFINEMENT = 8


@dataclass(frozen=True)
class Grid:
    """Uniform mass grid: cells i = 0..n-1 (centres), nodes j = 0..n."""

    delta_m: float
    centers: np.ndarray = field(repr=False)
    nodes: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return len(self.centers)

    @property
    def node_weights(self) -> np.ndarray:
        """Trapezoid weights of the nodes (1/2 at both ends)."""
        w = np.ones(self.n + 1)
        w[0] = w[-1] = 0.5
        return w


@dataclass(frozen=True)
class StationaryPressure:
    """p_S(x) = p_gamma - integral of g from x to M."""

    values: np.ndarray = field(repr=False)
    pS_at_0: float
    pS_min: float
    pS_max: float
    fine_x: np.ndarray = field(repr=False)
    fine_values: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class DomainSpec:
    M: float
    n: int
    p_gamma: float
    theta_gamma: float
    g: Field = field(default_factory=lambda: compile_expression("0"))
    refinement: int = DEFAULT_REFINEMENT

    def __post_init__(self) -> None:
        problems: List[str] = []
        if not self.M > 0:
            problems.append("M must be positive")
        if int(self.n) != self.n or self.n < 2:
            problems.append("n must be an integer >= 2")
        if not self.theta_gamma > 0:
            problems.append("theta_gamma must be positive")
        if not np.isfinite(self.p_gamma):
            problems.append("p_gamma must be finite")
        if self.refinement < 8 or self.refinement % 2:
            problems.append("refinement must be an even integer >= 8")
        if isinstance(self.g, PiecewiseConstant) and self.M > 0 and not self.g.covers(0.0, self.M):
            problems.append(f"g table must cover [0, M] = [0, {self.M}]")
        if problems:
            raise ConfigError(problems)

    @cached_property
    def grid(self) -> Grid:
        return build_grid(self)

    @cached_property
    def stationary(self) -> StationaryPressure:
        return stationary_pressure(self, self.grid)

    @cached_property
    def node_forcing(self) -> np.ndarray:
        """Control-volume averages of g around each node.

        Node j < n averages over [c_j - dm/2, c_j + dm/2] clipped to [0, M];
        node n over its half volume [M - dm/2, M].  Summing ``w_j*g_j*dm``
        over the nodes right of a cell centre reproduces the tail integral
        used for p_S there.
        """
        dm = self.grid.delta_m
        sp = self.stationary
        tail_c = self.p_gamma - sp.values
        tail_0 = self.p_gamma - sp.pS_at_0
        g = np.empty(self.n + 1)
        g[0] = (tail_0 - tail_c[0]) / (0.5 * dm)
        g[1:-1] = (tail_c[:-1] - tail_c[1:]) / dm
        g[-1] = tail_c[-1] / (0.5 * dm)
        return g


def build_grid(domain: DomainSpec) -> Grid:
    if domain.n < 2:
        raise ConfigError("n must be an integer >= 2")
    n = int(domain.n)
    dm = domain.M / n
    nodes = dm * np.arange(n + 1, dtype=float)
    nodes[-1] = domain.M
    centers = dm * (np.arange(n, dtype=float) + 0.5)
    return Grid(delta_m=dm, centers=centers, nodes=nodes)


def stationary_pressure(
    domain: DomainSpec, grid: Grid, refinement: Optional[int] = None
) -> StationaryPressure:
    """Stationary pressure at cell centres by composite midpoint quadrature.

    The grid is refined by an even factor so every cell centre is a fine
    node.  Table forcings are integrated exactly.
    """
    r = int(refinement or domain.refinement)
    if r < 8 or r % 2:
        raise DomainError("refinement must be an even integer >= 8")
    h = grid.delta_m / r
    n_fine = grid.n * r
    fine_x = h * np.arange(n_fine + 1, dtype=float)
    fine_x[-1] = domain.M

    if isinstance(domain.g, PiecewiseConstant):
        tail = domain.g.integral(fine_x, domain.M)
    else:
        mids = h * (np.arange(n_fine, dtype=float) + 0.5)
        gm = np.asarray(domain.g(mids), dtype=float)
        if not np.all(np.isfinite(gm)):
            k = int(np.flatnonzero(~np.isfinite(gm))[0])
            raise DomainError(f"g is not finite at x={mids[k]:.6g}")
        contrib = gm * h
        tail = np.concatenate((np.cumsum(contrib[::-1])[::-1], [0.0]))

    fine_values = domain.p_gamma - tail
    centre_idx = r * np.arange(grid.n) + r // 2
    values = fine_values[centre_idx]
    return StationaryPressure(
        values=values,
        pS_at_0=float(fine_values[0]),
        pS_min=float(np.min(fine_values)),
        pS_max=float(np.max(fine_values)),
        fine_x=fine_x,
        fine_values=fine_values,
    )
