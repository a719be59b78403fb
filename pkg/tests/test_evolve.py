import math

import numpy as np
import pytest

from efrlab.cases import poiseuille, taylor_green
from efrlab.errors import BlowUpError, InvalidSpecError, SolverError
from efrlab.evolve import FlowConfig, boundary_velocity, evolve_step, inlet_profile, trial_evolve
from efrlab.fields import State, VectorField, avg_abs_divergence, l2_norm_sq
from efrlab.grid import GeometrySpec
from efrlab.linsolve import pcg
from efrlab.orchestrator import get_grid


class TestFlowConfig:
    def test_reynolds_and_eta(self):
        cfg = FlowConfig()
        assert cfg.Re == pytest.approx(1000.0)
        # benchmark value delta = eta = 5.62e-4
        assert cfg.eta == pytest.approx(5.62e-4, rel=1e-3)

    def test_default_window_has_1000_steps(self):
        assert FlowConfig().n_steps == 1000

    def test_non_integer_window(self):
        with pytest.raises(InvalidSpecError):
            FlowConfig(T=0.0101).n_steps

    @pytest.mark.parametrize("kw", [{"nu": 0}, {"dt": -1e-3}, {"T": -1.0}, {"U": 0}])
    def test_invalid(self, kw):
        with pytest.raises(InvalidSpecError):
            FlowConfig(**kw)


class TestInletProfile:
    def test_walls_and_peak(self):
        u, v = inlet_profile(np.array([0.0, 0.41, 0.205]))
        assert u[0] == 0 and u[1] == pytest.approx(0, abs=1e-15)
        assert u[2] == pytest.approx(1.5, rel=1e-14)
        assert np.all(v == 0)

    def test_matches_benchmark_formula(self):
        y = np.linspace(0, 0.41, 37)
        np.testing.assert_allclose(inlet_profile(y)[0], 6 / 0.41 ** 2 * y * (0.41 - y), rtol=1e-13)

    def test_boundary_velocity_only_on_inlet(self, cyl_grid):
        bc = boundary_velocity(cyl_grid, FlowConfig(), 0.1)
        assert np.all(bc.u[1:] == 0) and np.all(bc.v == 0)
        assert bc.u[0].max() == pytest.approx(1.5, rel=0.02)


class TestEvolveStep:
    def test_zero_state_stays_zero(self, box_grid):
        s = State.zeros(box_grid)
        cfg = FlowConfig(nu=1e-3, dt=0.01)
        for _ in range(3):
            s = evolve_step(s, cfg, box_grid)
        assert np.all(s.velocity.u == 0) and np.all(s.velocity.v == 0)
        assert np.all(s.pressure.values == 0)

    def test_time_advances(self, box_grid):
        s = evolve_step(State.zeros(box_grid, 0.5), FlowConfig(dt=0.01), box_grid)
        assert s.time == pytest.approx(0.51)

    def test_taylor_green_energy_decay(self):
        g = get_grid(GeometrySpec.periodic_box(2 * math.pi, 2 * math.pi), 32, 32)
        nu, dt, n = 0.05, 0.01, 10
        cfg = FlowConfig(nu=nu, dt=dt, T=n * dt)
        s = taylor_green(g, nu)
        e0 = l2_norm_sq(s.velocity)
        for _ in range(n):
            s = evolve_step(s, cfg, g)
            assert avg_abs_divergence(s.velocity) < 1e-10
        ratio = l2_norm_sq(s.velocity) / e0
        assert ratio == pytest.approx(math.exp(-4 * nu * n * dt), rel=5e-3)

    def test_constant_forcing_accelerates_uniformly(self, box_grid):
        cfg = FlowConfig(nu=0.01, dt=0.1, forcing=lambda x, y, t: (0 * x + 2.0, 0 * y - 1.0))
        s = State.zeros(box_grid)
        for _ in range(4):
            s = evolve_step(s, cfg, box_grid)
        np.testing.assert_allclose(s.velocity.u, 0.8, atol=1e-8)
        np.testing.assert_allclose(s.velocity.v, -0.4, atol=1e-8)

    def test_viscous_energy_nonincreasing(self, box_grid, rng):
        from efrlab.fields import ScalarField

        # project a random field first so it is divergence free
        cfg = FlowConfig(nu=1.0, dt=0.01)
        vel = VectorField(box_grid, rng.standard_normal(box_grid.u_shape),
                          rng.standard_normal(box_grid.v_shape))
        s = evolve_step(State(vel, ScalarField.zeros(box_grid)), cfg, box_grid)
        energies = [l2_norm_sq(s.velocity)]
        for _ in range(5):
            s = evolve_step(s, cfg, box_grid)
            energies.append(l2_norm_sq(s.velocity))
        assert all(b <= a * (1 + 1e-12) for a, b in zip(energies, energies[1:]))

    def test_channel_boundary_conditions(self, cyl_grid):
        cfg = FlowConfig()
        s = State.zeros(cyl_grid)
        for _ in range(3):
            s = evolve_step(s, cfg, cyl_grid)
        bc = boundary_velocity(cyl_grid, cfg, s.time)
        np.testing.assert_array_equal(s.velocity.u[0], bc.u[0])
        assert np.all(s.velocity.v[:, 0] == 0) and np.all(s.velocity.v[:, -1] == 0)
        solid_u = cyl_grid.u_tags == "solid"
        assert np.all(s.velocity.u[solid_u] == 0)
        assert avg_abs_divergence(s.velocity) < 1e-8
        assert np.all(s.pressure.values[cyl_grid.solid] == 0)

    def test_poiseuille_is_nearly_steady(self):
        g = get_grid(GeometrySpec.channel(), 32, 16)
        cfg = FlowConfig(nu=0.05, dt=0.01)
        s = poiseuille(g)
        for _ in range(5):
            s = evolve_step(s, cfg, g)
        ref = poiseuille(g)
        err = math.sqrt(l2_norm_sq(s.velocity - ref.velocity) / l2_norm_sq(ref.velocity))
        assert err < 1e-2

    def test_deterministic(self, cyl_grid):
        cfg = FlowConfig()
        s = evolve_step(State.zeros(cyl_grid), cfg, cyl_grid)
        a = evolve_step(s, cfg, cyl_grid)
        b = evolve_step(s, cfg, cyl_grid)
        assert a.velocity.u.tobytes() == b.velocity.u.tobytes()
        assert a.pressure.values.tobytes() == b.pressure.values.tobytes()

    def test_nan_input_is_blow_up(self, box_grid):
        s = State.zeros(box_grid, 0.2)
        s.velocity.u[1, 1] = np.nan
        with pytest.raises(BlowUpError) as exc:
            evolve_step(s, FlowConfig(), box_grid)
        assert exc.value.time == pytest.approx(0.2)

    def test_huge_state_is_blow_up(self, box_grid):
        s = State.zeros(box_grid)
        s.velocity.u[:] = 1e7
        with pytest.raises(BlowUpError):
            evolve_step(s, FlowConfig(), box_grid)

    def test_solver_failure_carries_residual(self):
        import scipy.sparse as sp

        A = sp.diags([1.0, 2.0, 3.0]).tocsr()
        with pytest.raises(SolverError) as exc:
            pcg(A, np.ones(3), rtol=1e-14, maxiter=1)
        assert exc.value.residual > 1e-14


class TestTrialEvolve:
    def test_equals_evolve_and_is_pure(self, cyl_grid):
        cfg = FlowConfig()
        s = evolve_step(State.zeros(cyl_grid), cfg, cyl_grid)
        before = (s.velocity.u.copy(), s.velocity.v.copy(), s.pressure.values.copy())
        t1 = trial_evolve(s, cfg, cyl_grid)
        t2 = trial_evolve(s, cfg, cyl_grid)
        e = evolve_step(s, cfg, cyl_grid)
        for x in (t1, t2):
            np.testing.assert_array_equal(x.velocity.u, e.velocity.u)
            np.testing.assert_array_equal(x.pressure.values, e.pressure.values)
        np.testing.assert_array_equal(s.velocity.u, before[0])
        np.testing.assert_array_equal(s.velocity.v, before[1])
        np.testing.assert_array_equal(s.pressure.values, before[2])
