import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_velocity
from efrlab.efr import FilterConfig, differential_filter, relax
from efrlab.errors import DegenerateReferenceError, InvalidSpecError
from efrlab.evolve import FlowConfig, evolve_step, trial_evolve
from efrlab.fields import (ScalarField, State, VectorField, cell_gradient, h1_seminorm_sq,
                           l2_norm_sq)
from efrlab.loss import (LossContext, LossSpec, candidate_velocity, global_loss, local_loss,
                         make_objective)


@pytest.fixture(scope="module")
def channel_setup():
    from efrlab.grid import GeometrySpec
    from efrlab.orchestrator import get_grid

    g = get_grid(GeometrySpec.channel_cylinder(), 64, 12)
    cfg = FlowConfig()
    s = State.zeros(g)
    states = []
    for _ in range(4):
        s = evolve_step(s, cfg, g)
        states.append(s)
    return g, cfg, states


def make_ctx(channel_setup, ref_scale=1.0):
    g, cfg, states = channel_setup
    evolved = states[2]
    ref = State(states[1].velocity * ref_scale, states[1].pressure, evolved.time)
    return LossContext(grid=g, flow=cfg, filter=FilterConfig(), evolved=evolved, ref=ref,
                       ref_next=states[3], delta=cfg.eta)


class TestLossSpec:
    @pytest.mark.parametrize("kw", [{"kind": "median"}, {"w_u": -1.0}, {"w_p": 1.0, "kind": "local"},
                                    {"w_u": 0.0, "w_gradu": 0.0}])
    def test_invalid(self, kw):
        with pytest.raises(InvalidSpecError):
            LossSpec(**kw)

    def test_label(self):
        assert LossSpec("global", 1, 1, 1).label == "global[u,gradu,p]"
        assert LossSpec("local", 1, 0).label == "local[u]"


class TestLocalLoss:
    def test_zero_at_reference(self, channel_setup):
        ctx = make_ctx(channel_setup)
        assert local_loss(ctx.ref.velocity, ctx, LossSpec("local")) == 0.0

    def test_constant_offset(self, channel_setup):
        ctx = make_ctx(channel_setup)
        ref = ctx.ref.velocity
        shifted = VectorField(ref.grid, ref.u + 1.0, ref.v + 1.0)
        assert local_loss(shifted, ctx, LossSpec("local", 1, 0)) == pytest.approx(1.0, rel=1e-14)

    def test_brute_force(self, channel_setup, rng):
        ctx = make_ctx(channel_setup)
        g = ctx.grid
        u = random_velocity(g, rng)
        ref = ctx.ref.velocity
        total, count = 0.0, 0
        for i, j in zip(*np.nonzero(g.u_active)):
            total += (u.u[i, j] - ref.u[i, j]) ** 2
            count += 1
        for i, j in zip(*np.nonzero(g.v_active)):
            total += (u.v[i, j] - ref.v[i, j]) ** 2
            count += 1
        mse_u = total / count
        ga, gb = cell_gradient(u), cell_gradient(ref)
        total, count = 0.0, 0
        for i, j in zip(*np.nonzero(g.fluid)):
            for a, b in zip(ga, gb):
                total += (a[i, j] - b[i, j]) ** 2
                count += 1
        mse_g = total / count
        assert local_loss(u, ctx, LossSpec("local", 1, 1)) == pytest.approx(mse_u + mse_g, rel=1e-12)
        assert local_loss(u, ctx, LossSpec("local", 0, 1)) == pytest.approx(mse_g, rel=1e-12)

    def test_area_weighted_constant_offset(self, channel_setup):
        ctx = make_ctx(channel_setup)
        ref = ctx.ref.velocity
        shifted = VectorField(ref.grid, ref.u + 2.0, ref.v + 2.0)
        spec = LossSpec("local", 1, 0, area_weighted=True)
        assert local_loss(shifted, ctx, spec) == pytest.approx(4.0, rel=1e-14)

    @given(st.integers(0, 2 ** 31))
    def test_nonnegative(self, seed):
        from efrlab.grid import GeometrySpec
        from efrlab.orchestrator import get_grid

        g = get_grid(GeometrySpec.channel_cylinder(), 64, 12)
        rng = np.random.default_rng(seed)
        ref = State(random_velocity(g, rng), ScalarField.zeros(g))
        ctx = LossContext(grid=g, flow=FlowConfig(), filter=FilterConfig(), evolved=ref, ref=ref)
        assert local_loss(random_velocity(g, rng), ctx, LossSpec("local")) >= 0


class TestGlobalLoss:
    def test_zero_at_reference(self, channel_setup):
        ctx = make_ctx(channel_setup)
        spec = LossSpec("global", 1, 1, 1)
        assert global_loss(ctx.ref.velocity, ctx, spec, ctx.ref_next.pressure) == 0.0

    def test_homogeneity(self, channel_setup):
        ctx = make_ctx(channel_setup)
        assert global_loss(ctx.ref.velocity * 2.0, ctx, LossSpec("global", 1, 0)) == pytest.approx(3.0)

    def test_recomposition(self, channel_setup):
        ctx = make_ctx(channel_setup)
        u = relax(ctx.evolved.velocity, differential_filter(ctx.evolved.velocity, 1e-3), 0.3)
        p = trial_evolve(State(u, ctx.evolved.pressure, ctx.evolved.time), ctx.flow, ctx.grid).pressure
        ref, nxt = ctx.ref.velocity, ctx.ref_next.pressure
        expected = (abs(l2_norm_sq(u) / l2_norm_sq(ref) - 1)
                    + abs(h1_seminorm_sq(u) / h1_seminorm_sq(ref) - 1)
                    + abs(l2_norm_sq(p) / l2_norm_sq(nxt) - 1))
        got = global_loss(u, ctx, LossSpec("global", 1, 1, 1), p)
        assert got == pytest.approx(expected, rel=1e-12)
        obj = make_objective("delta_chi", ctx, LossSpec("global", 1, 1, 1))
        assert obj([1e-3, 0.3]) == pytest.approx(expected, rel=1e-9)

    @given(st.floats(0.1, 10.0))
    def test_scale_invariance(self, c):
        from efrlab.grid import GeometrySpec
        from efrlab.orchestrator import get_grid

        g = get_grid(GeometrySpec.channel_cylinder(), 64, 12)
        rng = np.random.default_rng(5)
        u, r = random_velocity(g, rng), random_velocity(g, rng)
        spec = LossSpec("global", 1, 1)

        def loss(scale):
            ref = State(r * scale, ScalarField.zeros(g))
            ctx = LossContext(grid=g, flow=FlowConfig(), filter=FilterConfig(), evolved=ref, ref=ref)
            return global_loss(u * scale, ctx, spec)

        assert loss(c) == pytest.approx(loss(1.0), rel=1e-10)

    def test_degenerate_reference(self, cyl_grid):
        zero = State.zeros(cyl_grid)
        ctx = LossContext(grid=cyl_grid, flow=FlowConfig(), filter=FilterConfig(), evolved=zero, ref=zero)
        with pytest.raises(DegenerateReferenceError):
            global_loss(VectorField.zeros(cyl_grid), ctx, LossSpec("global", 1, 0))

    def test_pressure_needs_next_reference(self, channel_setup):
        ctx = make_ctx(channel_setup)
        ctx.ref_next = None
        with pytest.raises(DegenerateReferenceError):
            global_loss(ctx.ref.velocity, ctx, LossSpec("global", 1, 0, 1), ctx.evolved.pressure)


class TestObjective:
    def test_chi_zero_equals_raw_evolved(self, channel_setup):
        ctx = make_ctx(channel_setup)
        spec = LossSpec("global", 1, 1)
        obj = make_objective("chi", ctx, spec)
        assert obj([0.0]) == global_loss(ctx.evolved.velocity, ctx, spec)

    def test_delta_zero_equals_raw_evolved(self, channel_setup):
        ctx = make_ctx(channel_setup)
        spec = LossSpec("local", 1, 1)
        obj = make_objective("delta", ctx, spec)
        assert obj([0.0]) == pytest.approx(local_loss(ctx.evolved.velocity, ctx, spec), rel=1e-12)

    def test_deterministic(self, channel_setup):
        ctx = make_ctx(channel_setup)
        obj = make_objective("delta_chi", ctx, LossSpec("global", 1, 1, 1))
        assert obj([4e-4, 0.2]) == obj([4e-4, 0.2])

    def test_chi_filters_once(self, channel_setup):
        ctx = make_ctx(channel_setup)
        obj = make_objective("chi", ctx, LossSpec("global", 1, 1))
        for chi in (0.1, 0.2, 0.5, 0.9):
            obj([chi])
        assert ctx.counters.filter_solves == 1 and ctx.counters.evaluations == 4

    def test_delta_refilters_each_time(self, channel_setup):
        ctx = make_ctx(channel_setup)
        obj = make_objective("delta", ctx, LossSpec("global", 1, 1, 1))
        for d in (1e-4, 2e-4, 3e-4):
            obj([d])
        assert ctx.counters.filter_solves == 3 and ctx.counters.trial_evolves == 3

    def test_chi_objective_is_quadratic_inside_abs(self, channel_setup):
        ctx = make_ctx(channel_setup)
        spec = LossSpec("global", 1, 0)
        vel = ctx.evolved.velocity
        filtered = differential_filter(vel, ctx.delta)
        ref_n = l2_norm_sq(ctx.ref.velocity)

        def signed(chi):
            return (l2_norm_sq(relax(vel, filtered, chi)) - ref_n) / ref_n

        xs = np.array([0.1, 0.4, 0.8])
        coef = np.polyfit(xs, [signed(x) for x in xs], 2)
        obj = make_objective("chi", ctx, spec)
        assert obj([0.6]) == pytest.approx(abs(np.polyval(coef, 0.6)), abs=1e-9)

    def test_candidate_variants(self, channel_setup):
        ctx = make_ctx(channel_setup)
        vel = ctx.evolved.velocity
        d = candidate_velocity("delta", [2e-4], ctx)
        np.testing.assert_allclose(d.u, differential_filter(vel, 2e-4).u, atol=1e-12)
        with pytest.raises(InvalidSpecError):
            make_objective("gamma", ctx, LossSpec())
