"""
Integration tests for the implicit solver on small grids.

Each test runs many coupled steps and checks a structural property of the
scheme: exact equilibria, energy bookkeeping, agreement with the explicit
reference step and the order of accuracy in time.
"""
from dataclasses import replace

import numpy as np
import pytest

from scripts import diagnostics, eos, outputs, solver
from scripts.run_config import build_config
from scripts.solver import StepParams
from tests.utils.fixtures import make_domain, s1_raw, uniform_state


def advance(state, spec, domain, dt, steps, **options):
    """Take *steps* steps of fixed size *dt*."""
    params = StepParams(dt=dt, dt_max=dt, growth=1.0, t_end=dt * steps, **options)
    for _ in range(steps):
        state, outcome = solver.step(state, spec, domain, params)
        assert outcome.retries == 0
    return state


def s1_small(n=10):
    config = build_config(s1_raw(n=n))
    return config.initial_state, config.eos, config.domain


class TestEquilibrium:
    """Uniform states at a root of p = p_gamma stay put."""

    @pytest.mark.parametrize("law, p_gamma, eta, theta", [
        ("TVE-1", 0.0, 1.0, 1.0),
        ("NUC-1", -0.9, 1.0, 0.1),
    ])
    def test_thousand_steps(self, law, p_gamma, eta, theta):
        spec = eos.load_builtin(law)
        domain = make_domain(n=20, p_gamma=p_gamma, theta_gamma=theta)
        start = uniform_state(domain, eta, theta)
        end = advance(start, spec, domain, 0.01, 1000)
        assert np.max(np.abs(end.v)) < 1e-12
        assert np.max(np.abs(end.eta - eta)) < 1e-12
        assert np.max(np.abs(end.theta - theta)) < 1e-12
        assert end.t == pytest.approx(10.0)


class TestEnergy:

    def test_lyapunov_decreases(self):
        raw = s1_raw(n=20, t_end=0.5)
        raw["diagnostics"]["stop_on_stabilization"] = False
        result = solver.run(build_config(raw))
        assert result.stop_reason == "t_end"
        assert result.lyapunov_violations == []
        assert result.contraction_violations == 0
        assert result.trajectory[-1].E < result.trajectory[0].E
        assert all(r.D >= 0 for r in result.trajectory)

    def test_balance_residual_is_second_order(self):
        """The per-step defect of the energy identity shrinks about fourfold per dt halving."""
        state, spec, domain = s1_small(n=200)
        residuals = []
        for dt in (1.0e-3, 5.0e-4, 2.5e-4):
            new = advance(state, spec, domain, dt, 1)
            residuals.append(abs(diagnostics.energy_balance(state, new, spec, domain, dt)))
        assert residuals[2] > 0
        assert residuals[0] > residuals[1] > residuals[2]
        assert residuals[0] / residuals[2] >= 7.0

    def test_balance_residual_recorded(self):
        raw = s1_raw(n=20, t_end=0.05)
        result = solver.run(build_config(raw))
        assert result.max_balance_residual == max(abs(r.balance_residual) for r in result.trajectory)
        assert result.max_balance_residual > 0


class TestExplicitReference:
    """Implicit and forward-Euler integrations of the same semi-discrete system agree."""

    @staticmethod
    def explicit_run(state, spec, domain, dt, steps):
        for _ in range(steps):
            state = solver.explicit_oracle_step(state, spec, domain, dt)
        return state

    def test_matches_explicit_reference(self):
        state, spec, domain = s1_small(n=8)
        implicit = advance(state, spec, domain, 1.0e-4, 1000, time_order=2)

        dt = 1.0e-5
        assert dt <= solver.explicit_dt_limit(state, spec, domain)
        coarse = self.explicit_run(state, spec, domain, dt, 10000)
        fine = self.explicit_run(state, spec, domain, 0.5 * dt, 20000)
        assert implicit.t == pytest.approx(0.1)
        assert fine.t == pytest.approx(0.1)

        for name in ("eta", "theta", "v"):
            reference = 2.0 * getattr(fine, name) - getattr(coarse, name)
            gap = np.max(np.abs(getattr(implicit, name) - reference)) / np.max(np.abs(reference))
            assert gap < 1e-4, f"{name}: relative gap {gap:.3e}"

    def test_explicit_balance_at_old_level(self):
        state, spec, domain = s1_small(n=10)
        dt = 1.0e-4
        new = solver.explicit_oracle_step(state, spec, domain, dt)
        residual = diagnostics.energy_balance(state, new, spec, domain, dt, level="prev")
        assert abs(residual) < 1e-5


class TestTimeAccuracy:

    def test_first_order_self_convergence(self):
        state, spec, domain = s1_small(n=10)
        T = 0.05
        finals = [advance(state, spec, domain, T / steps, steps) for steps in (25, 50, 100)]
        coarse = np.max(np.abs(finals[0].v - finals[1].v))
        fine = np.max(np.abs(finals[1].v - finals[2].v))
        assert 1.5 < coarse / fine < 2.6

    def test_log_form_agrees_to_second_order(self):
        state, spec, domain = s1_small(n=200)
        gaps = []
        for dt in (1.0e-3, 5.0e-4, 2.5e-4):
            new = advance(state, spec, domain, dt, 1)
            eta_log = solver.log_form_eta_update(state.eta, state, new, spec, domain, dt)
            gaps.append(np.max(np.abs(eta_log - new.eta)))
        assert gaps[0] < 1e-4
        assert gaps[0] / gaps[2] >= 10.0


class TestDeterminism:

    def test_identical_series(self, tmp_path):
        config = build_config(s1_raw(n=20, t_end=0.05))
        files = []
        for k in range(2):
            result = solver.run(config)
            files.append(outputs.write_series(tmp_path / f"series_{k}.csv", result.trajectory, config.q_list))
        assert files[0].read_bytes() == files[1].read_bytes()

    def test_output_stride(self):
        raw = s1_raw(n=10, t_end=0.02)
        raw["solver"].update({"dt_max": 1.0e-3, "output_stride": 5})
        result = solver.run(build_config(raw))
        assert result.steps == 20
        assert len(result.trajectory) == 5
        assert result.trajectory[-1].t == pytest.approx(0.02)


class TestRunControl:

    def test_snapshots_hit_requested_times(self):
        raw = s1_raw(n=10, t_end=0.05)
        raw["output"] = {"snapshot_times": [0, 0.0123, 0.05]}
        result = solver.run(build_config(raw))
        assert sorted(result.snapshots) == [0.0, 0.0123, 0.05]
        assert result.snapshots[0.0123].t == pytest.approx(0.0123, abs=1e-12)

    def test_remainder_shorter_than_dt_min_lands_on_end(self):
        raw = s1_raw(n=10, t_end=0.01005)
        raw["solver"].update({"dt_max": 1.0e-3, "dt_min": 1.0e-4})
        raw["output"] = {"snapshot_times": [0.00505]}
        result = solver.run(build_config(raw))
        assert result.final.t == pytest.approx(0.01005, abs=1e-12)
        assert result.snapshots[0.00505].t == pytest.approx(0.00505, abs=1e-12)
        assert all(r.t <= 0.01005 + 1e-12 for r in result.trajectory)

    def test_step_failure_carries_partial_result(self, monkeypatch):
        config = build_config(s1_raw(n=10, t_end=0.05))
        original = solver._picard

        def fail_late(state, *args):
            if state.t > 0.01:
                raise solver.PositivityError("eta", 0, 0.0)
            return original(state, *args)

        monkeypatch.setattr(solver, "_picard", fail_late)
        with pytest.raises(solver.StepFailure) as info:
            solver.run(replace(config, solver=replace(config.solver, dt_min=1e-4)))
        partial = info.value.partial
        assert partial.stop_reason == "step_failure"
        assert partial.final.t > 0.01
        assert partial.trajectory[-1].t == partial.final.t


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
