"""Unit tests for discrete fields, derived quantities and initial data."""

import numpy as np
import pandas as pd
import pytest

from scripts import outputs
from scripts.errors import ConfigError, DomainError, PositivityError
from scripts.expressions import compile_field
from scripts.state import (
    InitialProfiles,
    State,
    conductances,
    derived,
    eulerian_positions,
    heat_flux,
    initialize,
    load_profile,
    velocity_at_centers,
)
from tests.utils.fixtures import make_domain, make_state, nuc1, uniform_state  # noqa: F401


class TestState:

    def test_validate_accepts_consistent_fields(self):
        domain = make_domain(n=3)
        state = uniform_state(domain, 1.0, 0.1)
        assert state.validate() is state
        assert state.n == 3

    def test_wall_velocity_must_vanish(self):
        state = State(0.0, np.ones(2), np.ones(2), np.array([0.1, 0.0, 0.0]))
        with pytest.raises(DomainError, match="wall"):
            state.validate()

    def test_size_mismatch(self):
        state = State(0.0, np.ones(2), np.ones(2), np.zeros(2))
        with pytest.raises(DomainError, match="sizes"):
            state.validate()

    def test_positivity(self):
        state = State(0.0, np.array([1.0, -1.0]), np.ones(2), np.zeros(3))
        with pytest.raises(PositivityError) as info:
            state.validate()
        assert info.value.field == "eta"
        assert info.value.cell == 1


class TestDerived:
    """Stress, flux and energy on hand-sized grids."""

    def test_conductances_two_cells(self, nuc1):
        domain = make_domain(n=2)
        a = conductances(np.ones(2), np.full(2, 0.1), nuc1, domain)
        np.testing.assert_allclose(a, [4.0, 2.0, 0.0])

    def test_heat_flux(self):
        pi = heat_flux(np.array([4.0, 2.0, 0.0]), np.array([0.2, 0.5]), 0.1)
        np.testing.assert_allclose(pi, [0.4, 0.6, 0.0])

    def test_derived_fields(self, nuc1):
        domain = make_domain(n=2, theta_gamma=0.1)
        state = State(0.0, np.ones(2), np.full(2, 0.1), np.array([0.0, 0.5, 0.5]))
        d = derived(state, nuc1, domain)
        np.testing.assert_allclose(d.rho, [1.0, 1.0])
        np.testing.assert_allclose(d.p, [-0.9, -0.9])
        np.testing.assert_allclose(d.vx, [1.0, 0.0])
        np.testing.assert_allclose(d.sigma, [1.9, 0.9])
        np.testing.assert_allclose(d.pi, [0.0, 0.0, 0.0])
        np.testing.assert_allclose(d.e, [-1.4, -1.4])

    def test_eulerian_positions(self):
        domain = make_domain(n=4)
        state = uniform_state(domain, 2.0, 0.1)
        np.testing.assert_allclose(eulerian_positions(state, domain.grid), [0.0, 0.5, 1.0, 1.5, 2.0])

    def test_velocity_at_centers(self):
        np.testing.assert_allclose(velocity_at_centers(np.array([0.0, 1.0, 3.0])), [0.5, 2.0])


class TestInitialize:
    """Sampling of initial profiles."""

    def test_sampling(self):
        domain = make_domain(n=4)
        state = make_state(domain, "1 + x", 0.1, "x")
        np.testing.assert_allclose(state.eta, 1 + domain.grid.centers)
        np.testing.assert_allclose(state.v, domain.grid.nodes)
        assert state.t == 0.0

    def test_wall_velocity_clamped_with_warning(self):
        domain = make_domain(n=4)
        profiles = InitialProfiles(compile_field(1.0, "eta"), compile_field(0.1, "theta"),
                                   compile_field("0.1 + x", "v"))
        state, warnings = initialize(profiles, domain.grid, domain)
        assert state.v[0] == 0.0
        assert state.v[1] == pytest.approx(0.35)
        assert any("clamped" in w for w in warnings)

    def test_wall_temperature_mismatch_warns(self):
        domain = make_domain(n=4, theta_gamma=0.1)
        profiles = InitialProfiles(compile_field(1.0, "eta"), compile_field(0.2, "theta"),
                                   compile_field(0, "v"))
        _, warnings = initialize(profiles, domain.grid, domain)
        assert any("theta_gamma" in w for w in warnings)

    def test_nonpositive_eta(self):
        with pytest.raises(PositivityError):
            make_state(make_domain(n=4), "x - 0.5", 0.1, 0)


class TestRestartProfile:
    """Final-state snapshots reused as initial data."""

    def test_profile_restart(self, tmp_path):
        domain = make_domain(n=5)
        state = make_state(domain, "1 + 0.1*x", "0.1*(1 + x)", "0.2*x").with_time(3.5)
        path = outputs.write_profile(tmp_path / "profile_final.csv", state, domain.grid)
        restored = load_profile(path, domain.grid)
        assert restored.t == 0.0
        np.testing.assert_array_equal(restored.eta, state.eta)
        np.testing.assert_array_equal(restored.theta, state.theta)
        np.testing.assert_array_equal(restored.v, state.v)

    def test_restart_is_bit_exact(self, tmp_path):
        """Seventeen-digit floats read back unchanged, so a restart continues the same run."""
        domain = make_domain(n=64)
        rng = np.random.default_rng(7)
        v = np.zeros(65)
        v[1:] = rng.normal(scale=0.1, size=64)
        state = State(1.25, 0.4 + rng.random(64), 0.1 + 0.05 * rng.random(64), v)
        path = outputs.write_profile(tmp_path / "profile_final.csv", state, domain.grid)
        restored = load_profile(path, domain.grid)
        assert np.array_equal(restored.eta, state.eta)
        assert np.array_equal(restored.theta, state.theta)
        assert np.array_equal(restored.v, state.v)
        again = outputs.write_profile(tmp_path / "profile_again.csv", restored.with_time(1.25), domain.grid)
        assert again.read_bytes() == path.read_bytes()

    def test_profile_grid_mismatch(self, tmp_path):
        domain = make_domain(n=5)
        state = make_state(domain, 1.0, 0.1, 0)
        path = outputs.write_profile(tmp_path / "p.csv", state, domain.grid)
        with pytest.raises(ConfigError, match="cells"):
            load_profile(path, make_domain(n=6).grid)

    def test_profile_missing_columns(self, tmp_path):
        path = tmp_path / "bad.csv"
        pd.DataFrame({"x": [0.5], "eta": [1.0]}).to_csv(path, index=False)
        with pytest.raises(ConfigError, match="lacks"):
            load_profile(path, make_domain(n=2).grid)
