"""Stationary structure: roots of p(eta, theta_gamma) = p_S and limit classification.

Under a nonmonotone law a level can have several roots
eta(1) < ... < eta(k).  Every cell of a stabilized run should sit near one
of the roots of its own level; which one is observed, not predicted, so a
profile whose cells pick different branches is reported as mixed-phase.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import bisect

from scripts import eos
from scripts.diagnostics import DiagRecord
from scripts.domain import DomainSpec, Grid, StationaryPressure
from scripts.errors import ClassificationError, DomainError
from scripts.state import State

logger = logging.getLogger(__name__)

ROOT_SAMPLES = 4096
MAX_WIDENINGS = 3
RESIDUAL_TOL = 1.0e-6


@dataclass(frozen=True)
class RootSet:
    level: float
    roots: Tuple[float, ...]
    bracket: Tuple[float, float]
    residuals: Tuple[float, ...]
    tangencies: Tuple[float, ...] = ()

    @property
    def empty(self) -> bool:
        return not self.roots

    def __len__(self) -> int:
        return len(self.roots)


def roots(
    spec: eos.EosSpec,
    theta_gamma: float,
    c: float,
    bracket: Tuple[float, float],
    root_tol: float = 1.0e-12,
    samples: int = ROOT_SAMPLES,
    residual_tol: Optional[float] = None,
) -> RootSet:
    """All sign-changing roots of p(., theta_gamma) = c inside *bracket*.

    Sign changes on a log grid are refined by bisection to *root_tol*.
    Near-zero local minima of |p - c| without a sign change are reported as
    tangencies, not roots.  A refined sign change whose residual
    |p - c| exceeds *residual_tol* (default ``RESIDUAL_TOL * max(1, |c|)``)
    is a jump, not a root, and is dropped with a warning.
    """
    lo, hi = float(bracket[0]), float(bracket[1])
    if not 0 < lo < hi:
        raise DomainError(f"root bracket must satisfy 0 < lo < hi, got ({lo}, {hi})")
    grid = np.geomspace(lo, hi, samples)
    f = np.asarray(eos.pressure(spec, grid, theta_gamma), dtype=float) - c
    if not np.all(np.isfinite(f)):
        raise DomainError(f"pressure not finite inside root bracket ({lo}, {hi})")

    def residual(eta: float) -> float:
        return float(eos.pressure(spec, eta, theta_gamma)) - c

    found: List[float] = []
    sign = np.sign(f)
    for k in range(samples - 1):
        if sign[k] == 0:
            left = sign[k - 1] if k > 0 else 0
            right = sign[k + 1]
            if left * right < 0 or k == 0:
                found.append(float(grid[k]))
            continue
        if sign[k] * sign[k + 1] < 0:
            found.append(float(bisect(residual, grid[k], grid[k + 1], xtol=root_tol, rtol=4 * np.finfo(float).eps)))
    if sign[-1] == 0 and (samples < 2 or sign[-2] != 0):
        found.append(float(grid[-1]))

    deduped: List[float] = []
    for r in sorted(found):
        if not deduped or r - deduped[-1] > 2.0 * root_tol:
            deduped.append(r)

    scale = max(1.0, abs(c))
    limit = RESIDUAL_TOL * scale if residual_tol is None else residual_tol
    accepted: List[float] = []
    for r in deduped:
        if abs(residual(r)) <= limit:
            accepted.append(r)
        else:
            logger.warning(
                "level %.10g: sign change near eta=%.6g leaves residual %.3e > %.3e; not a root",
                c, r, abs(residual(r)), limit,
            )
    deduped = accepted

    af = np.abs(f)
    touch: List[float] = []
    for k in range(1, samples - 1):
        if (
            sign[k] != 0
            and sign[k - 1] == sign[k] == sign[k + 1]
            and af[k] <= af[k - 1]
            and af[k] <= af[k + 1]
            and af[k] < 1.0e-8 * scale
        ):
            touch.append(float(grid[k]))
    for eta_t in touch:
        logger.warning("level %.10g touches p(., %g) near eta=%.6g without crossing", c, theta_gamma, eta_t)

    return RootSet(
        level=float(c),
        roots=tuple(deduped),
        bracket=(lo, hi),
        residuals=tuple(abs(residual(r)) for r in deduped),
        tangencies=tuple(touch),
    )


@dataclass
class SteadyProfile:
    levels: np.ndarray
    root_sets: List[RootSet]
    selected: Optional[np.ndarray] = None
    branch: Optional[np.ndarray] = None
    distance: Optional[np.ndarray] = None
    pressure_residual: Optional[np.ndarray] = None
    within_tol: Optional[np.ndarray] = None
    mixed_phase: bool = False

    @property
    def empty_cells(self) -> List[int]:
        return [i for i, rs in enumerate(self.root_sets) if rs.empty]

    @property
    def classified(self) -> bool:
        return self.selected is not None

    def distinct_roots(self) -> List[float]:
        """Distinct selected values, merged within 1e-9 relative."""
        if self.selected is None:
            return []
        out: List[float] = []
        for r in sorted(x for x in self.selected if np.isfinite(x)):
            if not out or abs(r - out[-1]) > 1.0e-9 * max(1.0, abs(r)):
                out.append(float(r))
        return out


def default_bracket(eta0: np.ndarray) -> Tuple[float, float]:
    return float(np.min(eta0)) / 10.0, float(np.max(eta0)) * 10.0


def steady_profile(
    domain: DomainSpec,
    grid: Grid,
    pS: StationaryPressure,
    spec: eos.EosSpec,
    bracket: Tuple[float, float],
    root_tol: float = 1.0e-12,
) -> SteadyProfile:
    """Root set of every cell's level p_S(x_i); selection left empty.

    Cells without a root are retried on a bracket widened tenfold on each
    side, up to three times, within the law's evaluation bracket.
    """
    if len(pS.values) != grid.n:
        raise DomainError("stationary pressure does not match the grid")
    cache: Dict[float, RootSet] = {}
    sets: List[RootSet] = []
    ev_lo, ev_hi = spec.eval_bracket
    for level in pS.values:
        key = float(level)
        if key not in cache:
            lo, hi = bracket
            rs = roots(spec, domain.theta_gamma, key, (lo, hi), root_tol)
            widenings = 0
            while rs.empty and widenings < MAX_WIDENINGS:
                lo, hi = max(lo / 10.0, ev_lo), min(hi * 10.0, ev_hi)
                widenings += 1
                rs = roots(spec, domain.theta_gamma, key, (lo, hi), root_tol)
            if rs.empty:
                logger.warning("no root of p(., %g) = %.10g in (%g, %g)", domain.theta_gamma, key, lo, hi)
            cache[key] = rs
        sets.append(cache[key])
    return SteadyProfile(levels=np.asarray(pS.values, dtype=float).copy(), root_sets=sets)


def classify_limit(
    final: State,
    profile: SteadyProfile,
    spec: eos.EosSpec,
    theta_gamma: float,
    class_tol: float = 1.0e-2,
    allow_empty: bool = False,
) -> SteadyProfile:
    """Assign every cell the nearest root of its level.

    A cell is within tolerance when |eta - root| <= class_tol*max(1, root).
    ``mixed_phase`` is set when cells select at least two different
    branches (positions in their sorted root sets).
    """
    empty = profile.empty_cells
    if empty and not allow_empty:
        raise ClassificationError(empty)
    n = len(profile.root_sets)
    if len(final.eta) != n:
        raise DomainError("final state does not match the steady profile")

    selected = np.full(n, np.nan)
    branch = np.full(n, -1, dtype=int)
    distance = np.full(n, np.nan)
    for i, rs in enumerate(profile.root_sets):
        if rs.empty:
            continue
        r = np.asarray(rs.roots)
        j = int(np.argmin(np.abs(final.eta[i] - r)))
        selected[i] = r[j]
        branch[i] = j
        distance[i] = abs(final.eta[i] - r[j])

    p_final = np.asarray(eos.pressure(spec, final.eta, theta_gamma))
    within = distance <= class_tol * np.maximum(1.0, np.nan_to_num(selected, nan=1.0))
    used = set(int(b) for b in branch if b >= 0)
    return replace(
        profile,
        selected=selected,
        branch=branch,
        distance=distance,
        pressure_residual=np.abs(p_final - profile.levels),
        within_tol=within,
        mixed_phase=len(used) >= 2,
    )


def convergence_metrics(
    trajectory: Sequence[DiagRecord],
    thresholds: Mapping[str, float],
    dwell_fraction: float = 0.0,
) -> Dict[str, Optional[float]]:
    """First-passage time of every monitored norm.

    The first-passage time is the earliest record time after which the
    norm stays at or below its threshold until the end of the trajectory,
    provided the tail lasts at least ``dwell_fraction`` of the final time.
    ``None`` when the norm never settles.
    """
    if not trajectory:
        raise ValueError("empty trajectory")
    t = np.array([r.t for r in trajectory])
    out: Dict[str, Optional[float]] = {}
    for name, limit in thresholds.items():
        values = np.array([_field(r, name) for r in trajectory])
        above = np.flatnonzero(values > limit)
        if above.size == 0:
            out[name] = float(t[0])
            continue
        k = int(above[-1]) + 1
        if k >= len(t):
            out[name] = None
            continue
        if t[-1] - t[k] < dwell_fraction * t[-1]:
            out[name] = None
            continue
        out[name] = float(t[k])
    return out


def _field(record: DiagRecord, name: str) -> float:
    if hasattr(record, name) and name != "v_lq":
        return float(getattr(record, name))
    if name in record.v_lq:
        return float(record.v_lq[name])
    raise KeyError(f"unknown diagnostic {name!r}")
