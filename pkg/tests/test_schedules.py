import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crais.schedules import (
    ScheduleState,
    TuningStats,
    adaptive_search_step,
    cess,
    check_schedule,
    constant_rate_update,
    heuristic_schedule,
    interpolate_schedule,
    load_schedule_csv,
    save_schedule_csv,
)


class TestHeuristics:
    def test_linear(self):
        assert heuristic_schedule("linear", 4) == [0.25, 0.5, 0.75, 1.0]

    @pytest.mark.parametrize("kind", ["linear", "exponential", "sigmoidal"])
    def test_single_step(self, kind):
        assert heuristic_schedule(kind, 1) == [1.0]

    def test_exponential_rescaled(self):
        got = heuristic_schedule("exponential", 3, eps=0.5)
        np.testing.assert_allclose(got, [0.5 / 0.875, 0.75 / 0.875, 1.0], rtol=0, atol=1e-15)
        assert got[-1] == 1.0

    def test_sigmoidal_closed_form(self):
        M, c = 10, 10.0
        s = 1 / (1 + np.exp(-c * (np.arange(M + 1) / M - 0.5)))
        expected = (s - s[0]) / (s[-1] - s[0])
        np.testing.assert_allclose(heuristic_schedule("sigmoidal", M, c=c), expected[1:], rtol=0, atol=1e-15)

    @pytest.mark.parametrize("kind", ["linear", "exponential", "sigmoidal"])
    @pytest.mark.parametrize("M", [2, 7, 64, 500])
    def test_monotone_to_one(self, kind, M):
        taus = heuristic_schedule(kind, M)
        assert len(taus) == M and taus[-1] == 1.0
        check_schedule(taus)

    def test_errors(self):
        with pytest.raises(ValueError):
            heuristic_schedule("linear", 0)
        with pytest.raises(ValueError):
            heuristic_schedule("exponential", 3, eps=1.5)
        with pytest.raises(ValueError):
            heuristic_schedule("sigmoidal", 3, c=0)
        with pytest.raises(ValueError):
            heuristic_schedule("cosine", 3)


class TestConstantRate:
    def test_first_step(self):
        s = constant_rate_update(ScheduleState(delta=1 / 32, max_step=1.0), TuningStats(0.0, 1.0))
        assert s.beta == pytest.approx(math.exp(-1 / 32), abs=1e-15)
        assert s.beta == pytest.approx(0.96923, abs=1e-5)
        assert s.tau == pytest.approx(0.03077, abs=1e-5)

    def test_alpha_zero_ignores_r(self):
        base = ScheduleState(alpha=0.0, max_step=1.0)
        a = constant_rate_update(base, TuningStats(0.0, 2.0))
        b = constant_rate_update(base, TuningStats(5.0, 2.0))
        assert a.tau == b.tau

    def test_alpha_uses_r(self):
        base = ScheduleState(alpha=1.0, max_step=1.0)
        a = constant_rate_update(base, TuningStats(0.0, 2.0))
        b = constant_rate_update(base, TuningStats(1.0, 2.0))
        assert b.tau < a.tau

    def test_floor_clamp(self):
        s = constant_rate_update(ScheduleState(min_step=1e-4), TuningStats(0.0, 1e9))
        assert s.tau == pytest.approx(1e-4, rel=1e-12)
        assert s.beta == pytest.approx(1 - 1e-4, rel=1e-12)

    def test_ceiling_clamp(self):
        s = constant_rate_update(ScheduleState(max_step=1 / 16), TuningStats(0.0, 1e-6))
        assert s.tau == 1 / 16
        assert s.beta == pytest.approx(15 / 16)

    def test_rejects_zero_variance(self):
        with pytest.raises(ValueError):
            constant_rate_update(ScheduleState(), TuningStats(0.0, 0.0))

    @pytest.mark.parametrize("v,log_r,alpha", [(1.0, 0.0, 0.0), (3.0, 0.7, 0.5), (0.5, -1.2, 2.0), (8.0, 2.0, -0.5)])
    def test_stubbed_unrolling(self, v, log_r, alpha):
        delta = 1 / 32
        state = ScheduleState(delta=delta, alpha=alpha, max_step=1.0, min_step=1e-300)
        rate = delta / (v * math.exp(alpha * log_r))
        for i in range(1, 200):
            state = constant_rate_update(state, TuningStats(log_r, v))
            assert state.tau == pytest.approx(1 - math.exp(-i * rate), abs=1e-12)

    @given(st.lists(st.floats(1e-6, 1e6), min_size=1, max_size=60))
    @settings(max_examples=100, deadline=None)
    def test_strictly_increasing_within_clamps(self, vs):
        state = ScheduleState(max_step=1 / 16, min_step=1e-6)
        for v in vs:
            if state.tau >= 1.0:
                break
            new = constant_rate_update(state, TuningStats(0.0, v))
            step = new.tau - state.tau
            assert new.tau > state.tau
            assert new.beta < state.beta
            assert step <= 1 / 16 + 1e-15
            assert step >= 1e-6 * (1 - 1e-9) or new.tau == 1.0
            state = new


class TestCess:
    def test_no_move(self):
        assert cess(np.zeros(10), np.zeros(10)) == pytest.approx(10.0)

    def test_single_particle(self):
        assert cess([0.3], [4.0]) == 1.0

    def test_hand_value(self):
        assert cess([0.0, 0.0], np.log([1.0, 3.0])) == pytest.approx(1.6)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            cess([0.0, 0.0], [0.0])


def gaussian_probe(n=500, seed=0):
    z = np.random.default_rng(seed).standard_normal(n)
    lq = -0.5 * z**2
    lt = -0.5 * (z - 1.5) ** 2 / 0.3

    def bridge(t):
        return lq + t * (lt - lq)

    return bridge


class TestAdaptiveSearch:
    def test_flat_path_takes_max_step(self):
        lb = np.zeros(50)
        t = adaptive_search_step(0.2, np.zeros(50), lb, lambda t: lb, max_step=1 / 128)
        assert t == pytest.approx(0.2 + 1 / 128)

    @pytest.mark.parametrize("mode", ["cess_ratio", "ess_ratio"])
    def test_bisection_postcondition(self, mode):
        bridge = gaussian_probe()
        logw = np.zeros(500)
        target, tol = 0.7, 1e-6
        t0 = 0.05
        lb0 = bridge(t0)

        def ratio(t):
            incr = bridge(t) - lb0
            if mode == "cess_ratio":
                return cess(logw, incr) / 500
            from crais.numerics import ess

            return ess(logw + incr) / ess(logw)

        t = adaptive_search_step(t0, logw, lb0, bridge, mode, target, max_step=1.0, tol=tol)
        assert t0 < t < 1.0
        assert ratio(t) >= target >= ratio(t + tol)

    def test_target_near_one_hits_floor(self):
        bridge = gaussian_probe()
        t = adaptive_search_step(0.0, np.zeros(500), bridge(0.0), bridge, target_ratio=1 - 1e-15,
                                 max_step=0.5, min_step=1e-6)
        assert t == pytest.approx(1e-6)

    @given(st.floats(0.0, 0.99), st.floats(0.05, 0.95), st.floats(1e-3, 0.5))
    @settings(max_examples=50, deadline=None)
    def test_bounds(self, t0, ratio, max_step):
        bridge = gaussian_probe(100)
        t = adaptive_search_step(t0, np.zeros(100), bridge(t0), bridge, target_ratio=ratio, max_step=max_step)
        assert t0 < t <= min(1.0, t0 + max_step) + 1e-15

    def test_errors(self):
        with pytest.raises(ValueError):
            adaptive_search_step(0.0, np.zeros(2), np.zeros(2), lambda t: np.zeros(2), target_ratio=1.0)
        with pytest.raises(ValueError):
            adaptive_search_step(0.0, np.zeros(2), np.zeros(2), lambda t: np.zeros(2), mode="kl")


class TestInterpolate:
    def test_identity(self):
        taus = [0.1, 0.4, 0.45, 1.0]
        assert interpolate_schedule(taus, 4) == taus

    def test_hand(self):
        np.testing.assert_allclose(interpolate_schedule([0.5, 1.0], 4), [0.25, 0.5, 0.75, 1.0])

    def test_single(self):
        assert interpolate_schedule([0.2, 0.3, 1.0], 1) == [1.0]

    def test_rejects_non_monotone(self):
        with pytest.raises(ValueError):
            interpolate_schedule([0.5, 0.4, 1.0], 8)

    @given(st.lists(st.floats(1e-6, 1.0), min_size=1, max_size=30, unique=True), st.integers(1, 300))
    @settings(max_examples=200, deadline=None)
    def test_monotone_and_endpoint(self, raw, M):
        taus = sorted(set(raw) | {1.0})
        out = interpolate_schedule(taus, M)
        assert len(out) == M and out[-1] == 1.0
        assert out[0] > 0 and all(b > a for a, b in zip(out, out[1:]))


class TestScheduleIo:
    def test_round_trip(self, tmp_path):
        taus = heuristic_schedule("sigmoidal", 17)
        save_schedule_csv(taus, tmp_path / "s.csv")
        assert load_schedule_csv(tmp_path / "s.csv") == taus

    def test_check(self):
        for bad in ([], [0.0, 1.0], [0.5, 0.9], [0.5, 0.5, 1.0]):
            with pytest.raises(ValueError):
                check_schedule(bad)
