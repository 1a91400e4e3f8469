import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from batrom import ParameterPoint, simulate
from batrom.degradation import (DegradationSchedule, cycle_parameter, mean_relative_error,
                                relative_l2l2_error, run_cycle_study, schedule_eval)
from batrom.fom import SimulationError


class FakeRun:
    def __init__(self, soc, seconds=0.01):
        self.soc_at_emin = soc
        self.wall_seconds = seconds


class TestSchedule:
    @pytest.mark.parametrize("couple", [False, True])
    @pytest.mark.parametrize("beta", [0.1, 0.4, 0.7, 0.999])
    def test_endpoints_exact(self, beta, couple):
        s = DegradationSchedule(0.5, beta, 50, couple)
        assert schedule_eval(0, s) == 0.5
        assert schedule_eval(50, s) == beta * 0.5

    @settings(max_examples=100, deadline=None)
    @given(st.floats(1e-3, 10.0), st.floats(1e-3, 0.999), st.integers(1, 5000))
    def test_endpoints_property(self, f0, beta, n_total):
        s = DegradationSchedule(f0, beta, n_total)
        assert schedule_eval(0, s) == f0
        assert schedule_eval(n_total, s) == beta * f0

    def test_coupled_at_unit_rate_bitwise(self):
        a = DegradationSchedule(0.5, 0.3, 50, False)
        b = DegradationSchedule(0.5, 0.3, 50, True)
        n = np.arange(51)
        np.testing.assert_array_equal(schedule_eval(n, a, 1.0), schedule_eval(n, b, 1.0))

    def test_coupled_rate_scaling(self):
        s = DegradationSchedule(0.5, 0.5, 100, True)
        assert schedule_eval(100, s, 2.0) == pytest.approx(0.5 * 0.25, rel=1e-14)
        assert schedule_eval(100, s, 0.5) == pytest.approx(0.5 * np.sqrt(0.5), rel=1e-14)

    def test_solves_linear_ode(self):
        s = DegradationSchedule(0.5, 0.2, 40)
        n = np.linspace(0, 40, 81)
        F = schedule_eval(n, s)
        np.testing.assert_allclose(np.gradient(F, n, edge_order=2), s.rate() * F, rtol=1e-3)

    def test_monotone(self):
        F = schedule_eval(np.arange(101), DegradationSchedule(0.5, 0.4, 100))
        assert np.all(np.diff(F) < 0)

    def test_beyond_horizon_warns(self):
        with pytest.warns(UserWarning):
            schedule_eval(60, DegradationSchedule(0.5, 0.4, 50))

    def test_negative_cycle(self):
        with pytest.raises(ValueError):
            schedule_eval(-1, DegradationSchedule())

    @pytest.mark.parametrize("kw", [{"beta": 1.0}, {"beta": 0.0}, {"n_total": 0}, {"f0": 0.0},
                                    {"target": "porosity"}])
    def test_validation(self, kw):
        with pytest.raises(ValueError):
            DegradationSchedule(**kw)

    @pytest.mark.parametrize("target,expected", [("reaction_rate", (0.7, 0.25)),
                                                 ("diffusion", (0.25, 0.9)),
                                                 ("both", (0.25, 0.25))])
    def test_cycle_parameter_targets(self, target, expected):
        s = DegradationSchedule(0.5, 0.5, 10, target=target)
        mu = cycle_parameter(10, s, ParameterPoint(1.0, 0.7, 0.9))
        assert (mu.d_scale, mu.l_scale) == expected
        assert mu.c_rate == 1.0


class TestCycleStudy:
    def test_records_every_cycle(self):
        s = DegradationSchedule(0.5, 0.5, 4)
        res = run_cycle_study(s, lambda mu: FakeRun(mu.l_scale), ParameterPoint(1.0))
        np.testing.assert_array_equal(res.cycles, np.arange(5))
        np.testing.assert_allclose(res.capacity, schedule_eval(np.arange(5), s))
        assert res.monotone_nonincreasing()
        assert res.total_seconds == pytest.approx(0.05)

    def test_failures_recorded(self):
        def runner(mu):
            if mu.l_scale < 0.26:
                raise SimulationError("boom", None)
            return FakeRun(mu.l_scale)
        res = run_cycle_study(DegradationSchedule(0.5, 0.5, 4), runner, ParameterPoint(1.0))
        assert [r.failed for r in res.records] == [False] * 4 + [True]
        assert np.isnan(res.capacity[-1])

    def test_sampled_cycles(self):
        res = run_cycle_study(DegradationSchedule(0.5, 0.5, 10), lambda mu: FakeRun(1.0),
                              ParameterPoint(1.0), sample_cycles=[10, 0, 5, 5])
        np.testing.assert_array_equal(res.cycles, [0, 5, 10])

    def test_cycle_out_of_range(self):
        with pytest.raises(ValueError):
            run_cycle_study(DegradationSchedule(0.5, 0.5, 10), lambda mu: FakeRun(1.0),
                            ParameterPoint(1.0), sample_cycles=[11])

    def test_rows(self):
        res = run_cycle_study(DegradationSchedule(0.5, 0.5, 1), lambda mu: FakeRun(0.9),
                              ParameterPoint(2.0))
        rows = list(res.rows())
        assert rows[0] == [0, 0.5, 0.5, 2.0, 0.9]
        assert len(list(res.rows(with_timing=True))[0]) == 6

    def test_no_degradation_constant_capacity(self, config, small_mesh, small_disc):
        s = DegradationSchedule(0.5, 0.999999, 3)
        res = run_cycle_study(s, lambda mu: simulate(mu, config, small_mesh, disc=small_disc),
                              ParameterPoint(1.0))
        assert np.ptp(res.capacity) < 1e-5

    def test_capacity_fades(self, config, small_mesh, small_disc):
        s = DegradationSchedule(0.5, 0.2, 4)
        res = run_cycle_study(s, lambda mu: simulate(mu, config, small_mesh, disc=small_disc),
                              ParameterPoint(1.0), sample_cycles=[0, 2, 4])
        assert res.monotone_nonincreasing()
        assert res.capacity[-1] < res.capacity[0]


class TestErrorMetric:
    def test_identical(self, traj):
        assert relative_l2l2_error(traj, traj) == 0.0

    def test_scaled_copy(self):
        u = np.random.default_rng(0).standard_normal((5, 7))
        assert relative_l2l2_error(u, 2 * u) == pytest.approx(0.5, rel=1e-15)

    @settings(max_examples=50, deadline=None)
    @given(st.floats(1e-6, 1e6), st.integers(0, 1000))
    def test_scale_invariant(self, c, seed):
        rng = np.random.default_rng(seed)
        a, b = rng.standard_normal((2, 4, 6))
        assert relative_l2l2_error(c * a, c * b) == pytest.approx(relative_l2l2_error(a, b), rel=1e-9)

    def test_zero_denominator(self):
        with pytest.raises(ZeroDivisionError):
            relative_l2l2_error(np.ones((2, 3)), np.zeros((2, 3)))

    def test_common_prefix(self):
        a = np.ones((5, 3))
        b = np.ones((3, 3))
        assert relative_l2l2_error(a, b) == 0.0

    def test_mean(self):
        u = np.ones((2, 2))
        assert mean_relative_error([(u, u), (u, 2 * u)]) == pytest.approx(0.25)
