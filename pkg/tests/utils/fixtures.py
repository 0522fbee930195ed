"""
Test fixtures and utilities for the lab test suite.

This module provides common fixtures, helper functions, and utilities
used across different test categories.
"""
import copy
import os
import subprocess
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd
import pytest
import yaml

from scripts import eos
from scripts.domain import DomainSpec
from scripts.expressions import compile_expression, compile_field
from scripts.state import InitialProfiles, State, initialize

PROJECT_ROOT = Path(__file__).parent.parent.parent


@pytest.fixture
def project_root():
    """Return the project root directory."""
    return PROJECT_ROOT


@pytest.fixture
def nuc1():
    return eos.load_builtin("NUC-1")


@pytest.fixture
def tve1():
    return eos.load_builtin("TVE-1")


def make_domain(n: int = 8, p_gamma: float = 0.5, theta_gamma: float = 0.1,
                g: Any = 0, M: float = 1.0) -> DomainSpec:
    """Domain with g given as a number, expression string or table mapping."""
    return DomainSpec(M=M, n=n, p_gamma=p_gamma, theta_gamma=theta_gamma,
                      g=compile_field(g, "g", {"M": M}))


def make_state(domain: DomainSpec, eta: Any, theta: Any, v: Any) -> State:
    """Sample initial profiles (numbers or expressions in x) on the domain grid."""
    profiles = InitialProfiles(
        eta=compile_field(eta, "eta", {"M": domain.M}),
        theta=compile_field(theta, "theta", {"M": domain.M}),
        v=compile_field(v, "v", {"M": domain.M}),
    )
    state, _ = initialize(profiles, domain.grid, domain)
    return state


def uniform_state(domain: DomainSpec, eta: float, theta: float) -> State:
    n = domain.n
    return State(t=0.0, eta=np.full(n, eta), theta=np.full(n, theta), v=np.zeros(n + 1))


def s1_raw(n: int = 20, t_end: float = 0.05) -> Dict[str, Any]:
    """A reduced copy of the S1 preset as a raw config mapping."""
    return {
        "name": "s1_small",
        "eos": {"builtin": "NUC-1"},
        "domain": {"M": 1.0, "n": n, "p_gamma": 0.5, "theta_gamma": 0.1, "g": 0},
        "initial": {
            "eta": "0.4833*(1 + 0.2*sin(2*pi*x))",
            "theta": "0.1*(1 + 0.3*sin(pi*x))",
            "v": "0.1*sin(pi*x)",
        },
        "solver": {"dt": 1.0e-3, "dt_max": 0.01, "t_end": t_end, "picard_tol": 1.0e-10},
        "diagnostics": {"q_list": [4]},
    }


def write_config(tmp_path: Path, raw: Dict[str, Any], name: str = "config.yml") -> Path:
    path = tmp_path / name
    path.write_text(yaml.safe_dump(copy.deepcopy(raw), sort_keys=False))
    return path


def setup_test_environment(tmp_path: Path) -> Dict[str, Any]:
    """
    Set up a results directory and the environment for CLI subprocesses.

    Returns:
        Dictionary containing paths and environment setup
    """
    results_dir = tmp_path / "results"
    results_dir.mkdir(exist_ok=True)

    env = os.environ.copy()
    env["RESULTS_DIR"] = str(results_dir)
    env["PYTHONPATH"] = str(PROJECT_ROOT) + os.pathsep + env.get("PYTHONPATH", "")
    env["LAB_MAX_WORKERS"] = "2"

    return {
        "results_dir": results_dir,
        "env": env,
        "tmp_path": tmp_path,
    }


def run_lab(args: List[str], env: Optional[Dict[str, str]] = None) -> subprocess.CompletedProcess:
    """Run ``python -m scripts.lab`` with *args* from the project root."""
    cmd = [sys.executable, "-m", "scripts.lab", *args]
    return subprocess.run(cmd, cwd=PROJECT_ROOT, env=env, capture_output=True, text=True)


def read_series(run_dir: Path) -> pd.DataFrame:
    csv_file = run_dir / "series.csv"
    assert csv_file.exists(), f"series.csv not found in {run_dir}"
    return pd.read_csv(csv_file, float_precision="round_trip")


def validate_run_output(run_dir: Path) -> Dict[str, Any]:
    """Check the files every simulate run writes and return them parsed."""
    for name in ("series.csv", "profile_final.csv", "summary.txt", "run.log"):
        assert (run_dir / name).exists(), f"{name} not found in {run_dir}"
    return {
        "series": read_series(run_dir),
        "profile": pd.read_csv(run_dir / "profile_final.csv", float_precision="round_trip"),
        "summary": (run_dir / "summary.txt").read_text(),
        "steady": pd.read_csv(run_dir / "steady.csv", float_precision="round_trip") if (run_dir / "steady.csv").exists() else None,
    }


def constant(text: str, variables=("x",)):
    return compile_expression(text, variables=variables)
