"""Schedule, forward/reverse steps, and condition-mixture arithmetic."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sketchmotion.diffusion import (MixtureWeights, build_schedule, ddim_ladder,
                                    ddim_step, ddpm_mean, forward_sample,
                                    mix_noise, mixture_weights, predict_x0)

# Product of linspace(0.9999, 0.98, 1000), computed once with mpmath at 50
# digits (see test_alpha_bar_final_matches_extended_precision for the oracle).
ALPHA_BAR_FINAL = 4.03582976537566590e-05


@pytest.fixture(scope="module")
def schedule():
    return build_schedule()


class TestSchedule:
    def test_endpoints(self, schedule):
        assert schedule.alpha[0] == pytest.approx(0.9999, abs=0)
        assert schedule.alpha[999] == pytest.approx(0.9800, abs=0)

    def test_alpha_bar_first_equals_alpha(self, schedule):
        assert schedule.alpha_bar[0] == schedule.alpha[0]

    def test_alpha_bar_final_matches_extended_precision(self, schedule):
        from mpmath import mp, mpf
        mp.dps = 50
        alphas = np.linspace(0.9999, 0.9800, 1000)
        prod = mpf(1)
        for a in alphas:
            prod *= mpf(a)
        assert float(prod) == pytest.approx(ALPHA_BAR_FINAL, rel=1e-12)
        assert schedule.alpha_bar[-1] == pytest.approx(ALPHA_BAR_FINAL, rel=1e-10)

    def test_monotone_and_bounded(self, schedule):
        assert np.all(np.diff(schedule.alpha_bar) < 0)
        beta = 1.0 - schedule.alpha
        # upper bound holds up to float64 representation of 1 - 0.98
        assert np.all(beta > 0) and np.all(beta <= 0.02 + 1e-15)

    def test_abar_zero_is_one(self, schedule):
        assert schedule.abar(0) == 1.0

    def test_small_schedules_rejected(self):
        with pytest.raises(ValueError):
            build_schedule(1)


class TestForward:
    def test_zero_noise(self, schedule):
        x0 = np.ones((4, 3))
        xt = forward_sample(x0, 500, np.zeros_like(x0), schedule)
        assert np.allclose(xt, np.sqrt(schedule.abar(500)) * x0)

    def test_scalar_example(self):
        # x0=2, abar=0.25, eps=1 -> 0.5*2 + sqrt(0.75)
        xt = np.sqrt(0.25) * np.array([2.0]) + np.sqrt(1 - 0.25) * np.array([1.0])
        assert xt[0] == pytest.approx(1.8660, abs=1e-4)

    def test_variance_monte_carlo(self, schedule):
        # var(x_t | x0=0) = 1 - abar_t
        rng = np.random.default_rng(0)
        t = 700
        eps = rng.standard_normal(100_000)
        xt = forward_sample(np.zeros(100_000), t, eps, schedule)
        want = 1.0 - schedule.abar(t)
        assert want * 0.95 <= xt.var() <= want * 1.05

    def test_shape_mismatch_rejected(self, schedule):
        with pytest.raises(ValueError):
            forward_sample(np.zeros(3), 5, np.zeros(4), schedule)


class TestDdpmMean:
    def test_zero_eps(self, schedule):
        xt = np.full(3, 2.0)
        mu = ddpm_mean(xt, 100, np.zeros(3), schedule)
        assert np.allclose(mu, xt / np.sqrt(schedule.a(100)))

    def test_scalar_example(self):
        # x_t=1, a=0.98, abar=0.5, eps=0.2 -> ~1.00444
        val = (1.0 - (1 - 0.98) / np.sqrt(1 - 0.5) * 0.2) / np.sqrt(0.98)
        assert val == pytest.approx(1.00444, abs=1e-5)

    def test_reconstructs_forward_chain_mean(self, schedule):
        # with the oracle eps, mu_t equals the posterior mean through x0
        rng = np.random.default_rng(1)
        x0 = rng.normal(size=5)
        eps = rng.normal(size=5)
        t = 400
        xt = forward_sample(x0, t, eps, schedule)
        mu = ddpm_mean(xt, t, eps, schedule)
        a, ab = schedule.a(t), schedule.abar(t)
        want = (xt - (1 - a) / np.sqrt(1 - ab) * eps) / np.sqrt(a)
        assert np.allclose(mu, want, atol=1e-12)


class TestDdim:
    def test_scalar_example(self):
        # abar_t=0.64, abar_prev=0.81, x_t=1, eps=0.5
        x0h = (1.0 - np.sqrt(1 - 0.64) * 0.5) / np.sqrt(0.64)
        assert x0h == pytest.approx(0.875, abs=1e-12)
        xprev = np.sqrt(0.81) * x0h + np.sqrt(1 - 0.81) * 0.5
        assert xprev == pytest.approx(1.00544, abs=1e-5)

    def test_degenerate_step_is_identity(self, schedule):
        rng = np.random.default_rng(2)
        xt = rng.normal(size=7)
        eps = rng.normal(size=7)
        out = ddim_step(xt, 500, 500, eps, schedule)
        assert np.abs(out - xt).max() <= 1e-12

    def test_closed_loop_recovers_x0(self, schedule):
        # oracle noise at every rung of the 50-step ladder
        rng = np.random.default_rng(3)
        x0 = rng.normal(size=(6, 5))
        eps = rng.normal(size=(6, 5))
        x = forward_sample(x0, schedule.T_steps, eps, schedule)
        for t in ddim_ladder(schedule.T_steps, 20):
            x = ddim_step(x, t, max(t - 20, 0), eps, schedule)
        assert np.abs(x - x0).max() <= 1e-6

    def test_predict_x0_inverts_forward(self, schedule):
        rng = np.random.default_rng(4)
        x0 = rng.normal(size=9)
        eps = rng.normal(size=9)
        xt = forward_sample(x0, 250, eps, schedule)
        assert np.allclose(predict_x0(xt, 250, eps, schedule), x0, atol=1e-10)

    def test_ladder_is_fifty_steps(self, schedule):
        assert len(ddim_ladder(1000, 20)) == 50

    def test_tprev_must_not_exceed_t(self, schedule):
        with pytest.raises(ValueError):
            ddim_step(np.zeros(2), 10, 11, np.zeros(2), schedule)


class TestMixture:
    def test_early_stage_draw_kept(self):
        rng = np.random.default_rng(0)
        w = mixture_weights(1000, 1000, 2.5, 1.0, rng)
        assert w.as_tuple() == (2.5, 2.5, 0.0, -4.0)
        assert w.stage == "early"
        assert sum(w.as_tuple()) == pytest.approx(1.0, abs=1e-12)

    def test_early_stage_draw_dropped(self):
        rng = np.random.default_rng(0)
        w = mixture_weights(1000, 1000, 2.5, 0.0, rng)
        assert w.as_tuple() == (2.5, 0.0, 2.5, -4.0)
        assert sum(w.as_tuple()) == pytest.approx(1.0, abs=1e-12)

    def test_late_stage_all_conditions(self):
        rng = np.random.default_rng(0)
        w = mixture_weights(50, 1000, 2.5, 0.5, rng)   # t = T/20
        assert w.as_tuple() == (1.0, 0.0, 0.0, 0.0)
        assert w.stage == "late"

    def test_boundary_is_early(self):
        rng = np.random.default_rng(0)
        assert mixture_weights(100, 1000, 2.0, 0.0, rng).stage == "early"
        assert mixture_weights(99, 1000, 2.0, 0.0, rng).stage == "late"

    def test_w_must_exceed_one(self):
        rng = np.random.default_rng(0)
        with pytest.raises(ValueError):
            mixture_weights(500, 1000, 1.0, 0.5, rng)
        with pytest.raises(ValueError):
            mixture_weights(500, 1000, 2.0, 1.5, rng)

    def test_weights_must_sum_to_one(self):
        with pytest.raises(ValueError):
            MixtureWeights(w1=1.0, w2=0.0, w3=0.0, w4=0.5, stage="early")

    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 1000), st.floats(1.01, 5.0), st.floats(0.0, 1.0),
           st.integers(0, 10_000))
    def test_sum_one_property(self, t, w, p, seed):
        rng = np.random.default_rng(seed)
        mw = mixture_weights(t, 1000, w, p, rng)
        assert sum(mw.as_tuple()) == pytest.approx(1.0, abs=1e-12)


class TestMixNoise:
    def test_pure_first_setting(self):
        rng = np.random.default_rng(5)
        parts = [rng.normal(size=(3, 4)) for _ in range(4)]
        w = MixtureWeights(1.0, 0.0, 0.0, 0.0, "late")
        assert np.array_equal(mix_noise(*parts, w), parts[0])

    def test_affine_identity_on_equal_inputs(self):
        rng = np.random.default_rng(6)
        x = rng.normal(size=(3, 4))
        w = MixtureWeights(2.5, 2.5, 0.0, -4.0, "early")
        assert np.allclose(mix_noise(x, x, x, x, w), x, atol=1e-12)

    def test_matches_scalar_loop_oracle(self):
        rng = np.random.default_rng(7)
        parts = [rng.normal(size=(2, 3)) for _ in range(4)]
        w = MixtureWeights(2.0, 1.5, -0.5, -2.0, "early")
        got = mix_noise(*parts, w)
        ws = w.as_tuple()
        for i in range(2):
            for j in range(3):
                want = sum(ws[k] * parts[k][i, j] for k in range(4))
                assert got[i, j] == pytest.approx(want, abs=1e-12)

    def test_zero_mean_preserved_statistically(self):
        rng = np.random.default_rng(8)
        n = 100_000
        parts = [rng.standard_normal(n) for _ in range(4)]
        w = MixtureWeights(2.5, 2.5, 0.0, -4.0, "early")
        out = mix_noise(*parts, w)
        sigma = np.sqrt(sum(x * x for x in w.as_tuple()) / n)
        assert abs(out.mean()) <= 3.0 * sigma

    def test_shape_mismatch_rejected(self):
        w = MixtureWeights(1.0, 0.0, 0.0, 0.0, "late")
        with pytest.raises(ValueError):
            mix_noise(np.zeros(3), np.zeros(4), np.zeros(3), np.zeros(3), w)
