"""CSV and text emission.

All CSV files are written by pandas with ``%.17g`` floats and ``\\n``
line endings so identical runs give byte-identical files.
"""

from __future__ import annotations

from pathlib import Path
from typing import Any, Iterable, Mapping, Optional, Sequence

import numpy as np
import pandas as pd

from scripts.diagnostics import DiagRecord, columns
from scripts.domain import Grid, StationaryPressure
from scripts.stationary import SteadyProfile
from scripts.state import State, eulerian_positions, velocity_at_centers

FLOAT_FORMAT = "%.17g"
PROFILE_COLUMNS = ("x", "eulerian_x", "eta", "theta", "v", "v_right")
STEADY_COLUMNS = (
    "x",
    "pS",
    "n_roots",
    "roots",
    "final_eta",
    "selected_root",
    "branch",
    "distance",
    "pressure_residual",
    "within_tol",
)
SWEEP_COLUMNS = (
    "index",
    "value",
    "status",
    "stop_reason",
    "t_final",
    "V_final",
    "v_l2",
    "theta_l2",
    "pressure_l2",
    "eta_min",
    "eta_max",
    "directory",
)


def _write(df: pd.DataFrame, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return path


def write_series(path: Path, trajectory: Sequence[DiagRecord], q_list: Sequence[float]) -> Path:
    cols = columns(q_list)
    df = pd.DataFrame([r.to_row() for r in trajectory], columns=cols)
    return _write(df, path)


def profile_name(t: float) -> str:
    return f"profile_t{t:.6g}.csv"


def write_profile(path: Path, state: State, grid: Grid) -> Path:
    y = eulerian_positions(state, grid)
    df = pd.DataFrame(
        {
            "x": grid.centers,
            "eulerian_x": 0.5 * (y[:-1] + y[1:]),
            "eta": state.eta,
            "theta": state.theta,
            "v": velocity_at_centers(state.v),
            "v_right": state.v[1:],
        },
        columns=list(PROFILE_COLUMNS),
    )
    return _write(df, path)


def write_steady(path: Path, grid: Grid, pS: StationaryPressure, profile: SteadyProfile,
                 final: Optional[State] = None) -> Path:
    n = grid.n
    nan = np.full(n, np.nan)
    selected = profile.selected if profile.selected is not None else nan
    branch = profile.branch if profile.branch is not None else np.full(n, -1)
    distance = profile.distance if profile.distance is not None else nan
    residual = profile.pressure_residual if profile.pressure_residual is not None else nan
    within = profile.within_tol if profile.within_tol is not None else np.zeros(n, dtype=bool)
    df = pd.DataFrame(
        {
            "x": grid.centers,
            "pS": pS.values,
            "n_roots": [len(rs) for rs in profile.root_sets],
            "roots": [" ".join(FLOAT_FORMAT % r for r in rs.roots) for rs in profile.root_sets],
            "final_eta": final.eta if final is not None else nan,
            "selected_root": selected,
            "branch": branch,
            "distance": distance,
            "pressure_residual": residual,
            "within_tol": [int(bool(w)) for w in within],
        },
        columns=list(STEADY_COLUMNS),
    )
    return _write(df, path)


def write_sweep_index(path: Path, rows: Iterable[Mapping[str, Any]]) -> Path:
    df = pd.DataFrame(list(rows), columns=list(SWEEP_COLUMNS))
    return _write(df, path)


def write_summary(path: Path, lines: Sequence[str]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return path
