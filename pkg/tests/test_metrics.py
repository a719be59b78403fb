import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from efrlab.errors import DomainError
from efrlab.evolve import FlowConfig
from efrlab.fields import State, h1_norm_sq, h1_seminorm_sq, l2_norm_sq
from efrlab.grid import GeometrySpec
from efrlab.loss import LossSpec
from efrlab.metrics import (boxplot_stats, contribution_series, gain, param_histogram, pareto_table,
                            relative_errors, time_avg_contributions, time_average)
from efrlab.orchestrator import RunConfig, RunResult, run_baseline, run_dns


@pytest.fixture(scope="module")
def tg_ref():
    cfg = RunConfig(flow=FlowConfig(T=0.02), variant="dns", geometry=GeometrySpec.periodic_box(),
                    coarse=(16, 16), fine=(32, 32), initial="taylor_green")
    return run_dns(cfg)


@pytest.fixture(scope="module")
def channel_ref():
    return run_dns(RunConfig(flow=FlowConfig(T=0.02), variant="dns"))


def as_run(snapshots, steps=None):
    snapshots = list(snapshots)
    return SimpleNamespace(snapshots=snapshots, steps=steps or list(range(len(snapshots))))


def scaled(ref, c):
    return as_run(State(s.velocity * c, s.pressure * c, s.time) for s in ref.snapshots)


class TestRelativeErrors:
    def test_self_is_zero(self, tg_ref):
        e = relative_errors(as_run(tg_ref.snapshots), tg_ref)
        assert np.all(e.e_l2_u == 0) and np.all(e.e_h1_u == 0)
        assert np.all((e.e_l2_p == 0) | np.isnan(e.e_l2_p))

    def test_homogeneity(self, tg_ref):
        e = relative_errors(scaled(tg_ref, 1.1), tg_ref)
        np.testing.assert_allclose(e.e_l2_u, 0.1, atol=1e-12)
        np.testing.assert_allclose(e.e_h1_u, 0.1, atol=1e-12)

    def test_recomputation(self, tg_ref, channel_ref):
        res = run_baseline(RunConfig(flow=FlowConfig(T=0.02), variant="standard_efr"), ref=channel_ref)
        e = relative_errors(res, channel_ref)
        n = 3
        s, r = res.snapshots[n], channel_ref[n]
        du = s.velocity - r.velocity
        assert e.e_l2_u[n] == pytest.approx(math.sqrt(l2_norm_sq(du) / l2_norm_sq(r.velocity)), rel=1e-14)
        assert e.e_h1_u[n] == pytest.approx(math.sqrt(h1_norm_sq(du) / h1_norm_sq(r.velocity)), rel=1e-14)
        dp = s.pressure - r.pressure
        assert e.e_l2_p[n] == pytest.approx(math.sqrt(l2_norm_sq(dp) / l2_norm_sq(r.pressure)), rel=1e-14)
        assert np.all(e.e_l2_u[1:] >= 0)

    def test_zero_reference_marked_undefined(self, channel_ref):
        e = relative_errors(as_run(channel_ref.snapshots), channel_ref)
        assert math.isnan(e.e_l2_u[0]) and np.all(e.e_l2_u[1:] == 0)

    def test_time_mismatch(self, tg_ref):
        bad = as_run([tg_ref[1]], steps=[0])
        with pytest.raises(ValueError):
            relative_errors(bad, tg_ref)

    def test_rows(self, tg_ref):
        rows = list(relative_errors(as_run(tg_ref.snapshots), tg_ref).rows())
        assert len(rows) == len(tg_ref) and rows[2][0] == 2


class TestContributions:
    def test_self_is_zero(self, tg_ref):
        avg = time_avg_contributions(as_run(tg_ref.snapshots), tg_ref)
        assert avg["u"] == 0 and avg["gradu"] == 0

    def test_constant_contribution(self, tg_ref):
        # |1.1^2 - 1| = 0.21 at every step
        avg = time_avg_contributions(scaled(tg_ref, 1.1), tg_ref)
        assert avg["u"] == pytest.approx(0.21, rel=1e-12)
        assert avg["gradu"] == pytest.approx(0.21, rel=1e-12)

    def test_direct_mean(self, channel_ref):
        res = run_baseline(RunConfig(flow=FlowConfig(T=0.02), variant="standard_ef"), ref=channel_ref)
        vals = []
        for s, r in zip(res.snapshots[1:], channel_ref.snapshots[1:]):
            a, b = h1_seminorm_sq(s.velocity), h1_seminorm_sq(r.velocity)
            vals.append(abs(a - b) / b)
        avg = time_avg_contributions(res, channel_ref)
        assert avg["gradu"] == pytest.approx(sum(vals) / len(vals), rel=1e-12)

    def test_spec_selects_terms(self, tg_ref):
        avg = time_avg_contributions(as_run(tg_ref.snapshots), tg_ref, LossSpec("global", 1, 0))
        assert set(avg) == {"u"}

    def test_t_start(self, tg_ref):
        series = contribution_series(scaled(tg_ref, 1.2), tg_ref)
        assert series["u"].size == len(tg_ref)
        assert time_average([1.0, 2.0, 3.0, float("nan")], [0, 1, 2, 3], t_start=1) == 2.5


class TestGain:
    def test_examples(self):
        assert gain(0.001, 0.1) == pytest.approx(99.0)
        assert gain(0.2, 0.1) == pytest.approx(-100.0)

    @given(st.floats(1e-12, 1e6))
    def test_equal_is_zero(self, x):
        assert gain(x, x) == 0.0

    @pytest.mark.parametrize("b", [0.0, -1.0, float("nan")])
    def test_bad_baseline(self, b):
        with pytest.raises(DomainError):
            gain(0.1, b)


class TestHistogram:
    def test_constant(self):
        frac, _ = param_histogram([0.02] * 50, bins=10)
        assert frac.max() == 1.0 and frac.sum() == 1.0

    def test_two_values(self):
        frac, _ = param_histogram([0.0, 1.0] * 20, bins=2, range=(0, 1))
        np.testing.assert_array_equal(frac, [0.5, 0.5])

    def test_uniform_sampling(self):
        vals = np.random.default_rng(3).uniform(0, 1, 10_000)
        frac, _ = param_histogram(vals, bins=10, range=(0, 1))
        assert np.all(np.abs(frac - 0.1) <= 0.02)

    @given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=200), st.integers(1, 30))
    def test_mass_sums_to_one(self, vals, bins):
        frac, _ = param_histogram(vals, bins=bins)
        assert abs(frac.sum() - 1.0) <= 1e-12

    def test_empty(self):
        with pytest.raises(ValueError):
            param_histogram([])


class TestBoxplot:
    def test_example(self):
        s = boxplot_stats([1, 2, 3, 4, 5])
        assert (s.median, s.q1, s.q3, s.min, s.max, s.mean) == (3, 2, 4, 1, 5, 3)
        assert s.iqr == 2

    def test_constant(self):
        s = boxplot_stats([0.7] * 9)
        assert len({s.median, s.q1, s.q3, s.min, s.max}) == 1

    def test_empty(self):
        with pytest.raises(ValueError):
            boxplot_stats([])

    @given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=100))
    def test_sort_oracle(self, vals):
        s = boxplot_stats(vals)
        a = sorted(vals)

        def q(p):
            pos = p * (len(a) - 1)
            lo = math.floor(pos)
            hi = min(lo + 1, len(a) - 1)
            return a[lo] + (pos - lo) * (a[hi] - a[lo])

        scale = max(1.0, max(abs(v) for v in vals))
        for got, p in ((s.q1, 0.25), (s.median, 0.5), (s.q3, 0.75)):
            assert abs(got - q(p)) <= 1e-9 * scale
        assert s.min <= s.q1 <= s.median <= s.q3 <= s.max


class TestPareto:
    def fake(self, ref, variant, k, t):
        cfg = RunConfig(flow=FlowConfig(T=0.02), variant=variant, k=k)
        return RunResult(variant=variant, snapshots=list(ref.snapshots), steps=list(range(len(ref))),
                         trajectory=None, wall_clock_s=t, diagnostics={}, config=cfg)

    def test_equal_time_is_100_percent(self, tg_ref):
        rows = pareto_table([self.fake(tg_ref, "no_efr", 10, 2.5)], tg_ref, dns_wall_clock_s=2.5)
        assert rows[0].rel_time_pct == 100.0 and rows[0].k == 0
        assert rows[0].avg_Lu == 0.0

    def test_sorted(self, tg_ref):
        runs = [self.fake(tg_ref, v, k, 1.0) for v, k in
                [("delta_chi_opt", 50), ("chi_opt", 10), ("delta_chi_opt", 5), ("chi_opt", 1)]]
        rows = pareto_table(runs, tg_ref, dns_wall_clock_s=4.0)
        assert [(r.variant, r.k) for r in rows] == [("chi_opt", 1), ("chi_opt", 10),
                                                    ("delta_chi_opt", 5), ("delta_chi_opt", 50)]
        assert all(r.rel_time_pct == 25.0 for r in rows)

    def test_recomputation(self, channel_ref):
        res = run_baseline(RunConfig(flow=FlowConfig(T=0.02), variant="standard_efr"), ref=channel_ref)
        row = pareto_table([res], channel_ref)[0]
        avg = time_avg_contributions(res, channel_ref)
        assert (row.avg_Lu, row.avg_Lgradu, row.avg_Lp) == (avg["u"], avg["gradu"], avg["p"])
        assert row.rel_time_pct == pytest.approx(100 * res.wall_clock_s / channel_ref.wall_clock_s)

    def test_needs_dns_time(self, tg_ref):
        with pytest.raises(DomainError):
            pareto_table([], tg_ref, dns_wall_clock_s=0.0)
