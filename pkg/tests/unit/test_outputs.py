"""Unit tests for CSV and summary emission."""

import numpy as np
import pandas as pd

from scripts import diagnostics, outputs, stationary
from scripts.state import State
from tests.utils.fixtures import make_domain, nuc1  # noqa: F401


def test_series_columns_and_precision(tmp_path, nuc1):
    domain = make_domain(n=2, p_gamma=0.5)
    state = State(0.1, np.ones(2), np.full(2, 0.1), np.array([0.0, 1.0 / 3.0, 0.5]))
    rec = diagnostics.make_record(state, nuc1, domain, dt=0.1, q_list=[4, 8])
    path = outputs.write_series(tmp_path / "series.csv", [rec, rec], [4, 8])
    text = path.read_bytes()
    assert b"\r" not in text
    df = pd.read_csv(path, float_precision="round_trip")
    assert list(df.columns) == diagnostics.columns([4, 8])
    assert len(df) == 2
    assert df["v_l2"][0] == rec.v_l2
    assert df["v_l8"][0] == rec.v_lq["v_l8"]


def test_profile_columns(tmp_path):
    domain = make_domain(n=2)
    state = State(0.0, np.array([1.0, 2.0]), np.full(2, 0.1), np.array([0.0, 0.2, 0.4]))
    df = pd.read_csv(outputs.write_profile(tmp_path / "p.csv", state, domain.grid), float_precision="round_trip")
    assert list(df.columns) == list(outputs.PROFILE_COLUMNS)
    np.testing.assert_allclose(df["x"], [0.25, 0.75])
    np.testing.assert_allclose(df["eulerian_x"], [0.25, 1.0])
    np.testing.assert_allclose(df["v"], [0.1, 0.3])
    np.testing.assert_allclose(df["v_right"], [0.2, 0.4])


def test_profile_name():
    assert outputs.profile_name(0.0) == "profile_t0.csv"
    assert outputs.profile_name(2.5) == "profile_t2.5.csv"


def test_steady_unclassified(tmp_path, nuc1):
    domain = make_domain(n=3, p_gamma=0.0008, theta_gamma=0.1)
    profile = stationary.steady_profile(domain, domain.grid, domain.stationary, nuc1, (0.01, 1000.0))
    df = pd.read_csv(outputs.write_steady(tmp_path / "steady.csv", domain.grid, domain.stationary, profile),
                     float_precision="round_trip")
    assert list(df.columns) == list(outputs.STEADY_COLUMNS)
    assert list(df["n_roots"]) == [3, 3, 3]
    assert len(df["roots"][0].split()) == 3
    assert list(df["branch"]) == [-1, -1, -1]
    assert df["selected_root"].isna().all()


def test_sweep_index_order(tmp_path):
    rows = [{"index": 1, "value": 0.2, "status": "completed"}, {"index": 0, "value": 0.1, "status": "failed"}]
    df = pd.read_csv(outputs.write_sweep_index(tmp_path / "sweep_index.csv", rows), float_precision="round_trip")
    assert list(df.columns) == list(outputs.SWEEP_COLUMNS)
    assert list(df["index"]) == [1, 0]


def test_summary(tmp_path):
    path = outputs.write_summary(tmp_path / "sub" / "summary.txt", ["a: 1", "b: 2"])
    assert path.read_text() == "a: 1\nb: 2\n"
