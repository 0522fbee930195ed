"""Tridiagonal solves for the implicit sub-steps.

The system is written row-wise as::

    lower[j]*u[j-1] + diag[j]*u[j] + upper[j]*u[j+1] = rhs[j]

with ``lower[0]`` and ``upper[-1]`` ignored.  Solved with
``scipy.linalg.solve_banded`` after a diagonal-dominance check.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from scripts.errors import SolverError

DOMINANCE_RTOL = 1.0e-12


def diagonal_dominance_margin(lower: np.ndarray, diag: np.ndarray, upper: np.ndarray) -> np.ndarray:
    """``|diag| - |lower| - |upper|`` row by row (end rows use one neighbour)."""
    off = np.zeros_like(diag)
    off[1:] += np.abs(lower[1:])
    off[:-1] += np.abs(upper[:-1])
    return np.abs(diag) - off


def solve(lower: np.ndarray, diag: np.ndarray, upper: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    n = len(diag)
    if not (len(lower) == len(upper) == len(rhs) == n):
        raise ValueError("lower, diag, upper and rhs must have the same length")
    margin = diagonal_dominance_margin(lower, diag, upper)
    bad = np.flatnonzero(margin < -DOMINANCE_RTOL * np.abs(diag))
    if bad.size:
        k = int(bad[0])
        raise SolverError(
            f"tridiagonal matrix not diagonally dominant at row {k} "
            f"(margin {margin[k]:.3e}); reduce dt"
        )
    ab = np.zeros((3, n))
    ab[0, 1:] = upper[:-1]
    ab[1, :] = diag
    ab[2, :-1] = lower[1:]
    try:
        u = scipy.linalg.solve_banded((1, 1), ab, rhs, check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SolverError(f"banded solve failed: {exc}") from exc
    if not np.all(np.isfinite(u)):
        raise SolverError("banded solve produced non-finite values")
    return u
