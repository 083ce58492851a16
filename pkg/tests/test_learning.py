import numpy as np
import pytest

from duopoly_escapes import learning as L
from duopoly_escapes import rng
from duopoly_escapes.market import BeliefVector, MarketParams, best_response, nash_price


def _ols(x, y):
    X = np.column_stack([np.ones_like(x), x])
    return np.linalg.lstsq(X, y, rcond=None)[0]


def test_update_m0():
    assert L.update_m0(1.0, 2.0, 0.1) == pytest.approx(1.1)


def test_rls_current_timing_equals_batch_ols():
    g = np.random.default_rng(0)
    x = g.normal(1, 0.3, 300)
    y = 0.4 + 0.6 * x + g.normal(0, 0.1, 300)
    k = 5
    a0, a1 = _ols(x[:k], y[:k])
    X = np.column_stack([np.ones(k), x[:k]])
    R = X.T @ X / k
    belief = BeliefVector(a0, a1)
    for t in range(k, len(x)):
        belief, R = L.update_m1(belief, R, x[t], y[t], 1.0 / (t + 1), timing="current")
    ref = _ols(x, y)
    assert np.allclose([belief.alpha0, belief.alpha1], ref, rtol=1e-10, atol=1e-12)


def test_rls_lagged_timing_tracks_ols():
    g = np.random.default_rng(1)
    x = g.normal(1, 0.3, 5000)
    y = 0.4 + 0.6 * x + g.normal(0, 0.05, 5000)
    belief, R = BeliefVector(0.0, 0.0), np.array([[1.0, 1.0], [1.0, 1.09]])
    for t in range(len(x)):
        belief, R = L.update_m1(belief, R, x[t], y[t], 1.0 / (t + 10))
    assert belief.alpha0 == pytest.approx(0.4, abs=0.02)
    assert belief.alpha1 == pytest.approx(0.6, abs=0.02)


def test_rls_regularizes_singular_moment_matrix():
    belief, R = L.update_m1(BeliefVector(1.0, 0.0), np.zeros((2, 2)), 1.0, 2.0, 0.1)
    assert np.all(np.isfinite([belief.alpha0, belief.alpha1]))


def test_counterfactual_profits(params):
    p0, p1 = L.counterfactual_profits(params, 0.8, 1.0, 0.01, 0.9)
    assert p0 == pytest.approx(0.81 * (1 - 0.81 + 0.7 * 0.9))
    assert p1 == pytest.approx(1.01 * (1 - 1.01 + 0.7 * 0.9))


def test_weight_update_strict_indicator(params):
    st = L.sce_nash_state(params, pi=0.5)
    tie = L.update_weights(st, 0.3, 0.3, 0.1)
    assert tie.pi == pytest.approx(0.45)
    up = L.update_weights(st, 0.3, 0.4, 0.1)
    assert up.pi == pytest.approx(0.55)
    hi = L.update_weights(L.sce_nash_state(params, pi=0.99), 0.3, 0.4, 0.5)
    assert hi.pi == 0.99


def _manual_step(states, params, lam, eps):
    """Straight-line re-implementation of one period."""
    A, B, C = params.A, params.B, params.C
    b0 = [best_response(params, BeliefVector(s.alpha0, 0.0)) for s in states]
    b1 = [best_response(params, s.alpha1) for s in states]
    b = [(1 - s.pi) * x0 + s.pi * x1 for s, x0, x1 in zip(states, b0, b1)]
    p = [b[i] + eps[i] for i in range(2)]
    out = []
    for i in range(2):
        s, pj = states[i], p[1 - i]
        x = b1[i] + eps[i]
        R = s.R
        err = pj - s.alpha1.alpha0 - s.alpha1.alpha1 * x
        step = np.linalg.solve(R, np.array([1.0, x])) * err
        a = np.array([s.alpha1.alpha0, s.alpha1.alpha1]) + lam * step
        R = R + lam * (np.outer([1, x], [1, x]) - R)
        q0 = b0[i] + eps[i]
        pi0 = q0 * (A - B * q0 + C * pj)
        pi1 = x * (A - B * x + C * pj)
        pb0 = s.pibar0 + lam * (pi0 - s.pibar0)
        pb1 = s.pibar1 + lam * (pi1 - s.pibar1)
        pi = min(max(s.pi + lam * ((pb1 > pb0) - s.pi), 0.01), 0.99)
        out.append(L.FirmState(pi, s.alpha0 + lam * (pj - s.alpha0), BeliefVector(*a), R, pb0, pb1))
    return out, p


def test_step_matches_manual_oracle(params):
    s1 = L.FirmState(0.3, 0.9, BeliefVector(0.5, 0.4), np.array([[1.0, 0.9], [0.9, 0.85]]), 0.6, 0.62)
    s2 = L.FirmState(0.7, 0.8, BeliefVector(0.6, 0.2), np.array([[1.0, 0.8], [0.8, 0.7]]), 0.58, 0.57)
    new, rec = L.step((s1, s2), params, 0.05, (0.03, -0.02))
    ref, p = _manual_step((s1, s2), params, 0.05, (0.03, -0.02))
    assert np.allclose(rec.p, p, atol=1e-14)
    for a, b in zip(new, ref):
        assert np.allclose(a.to_array(), b.to_array(), atol=1e-13)


def test_simulate_agrees_with_repeated_step(params):
    cfg = L.SimConfig(params=params, horizon=50, seed=9)
    traj = L.simulate(cfg)
    states = cfg.initial_states()
    for t in range(50):
        states, rec = L.step(states, params, 0.01, tuple(traj.eps[t]))
        assert np.allclose(rec.p, traj.p[t], atol=1e-14)
    assert np.allclose(np.stack([s.to_array() for s in states]), traj.states[-1], atol=1e-13)


def test_simulate_is_deterministic(params):
    cfg = L.SimConfig(params=params, horizon=2000, seed=3)
    a, b = L.simulate(cfg), L.simulate(cfg)
    assert np.array_equal(a.states, b.states) and np.array_equal(a.p, b.p)


def test_shocks_come_from_counter_stream(params):
    traj = L.simulate(L.SimConfig(params=params, horizon=10, seed=11))
    assert np.array_equal(traj.eps, rng.shock_block(11, 1, 10, params.sigma))


def test_zero_noise_stays_at_nash():
    P = MarketParams(sigma2=0.0)
    traj = L.simulate(L.SimConfig(params=P, horizon=500, seed=0))
    assert np.max(np.abs(traj.p - nash_price(P))) < 1e-12


def test_forced_models_pin_weights(params):
    traj = L.simulate(
        L.SimConfig(params=params, horizon=200, seed=1, step=L.StepConfig(forced=(0, 1)))
    )
    assert np.array_equal(traj.b[:, 0], traj.b0[:, 0])
    assert np.array_equal(traj.b[:, 1], traj.b1[:, 1])


def test_slope_clamp(params):
    cfg = L.StepConfig()
    traj = L.simulate(L.SimConfig(params=params, horizon=20000, seed=2, step=L.StepConfig(forced=(1, 1))))
    assert traj.slope.max() <= cfg.slope_cap(params) + 1e-15
    assert traj.slope.min() >= cfg.slope_floor


def test_first_exit_matches_full_simulation(params):
    lam, rho, seed = 0.02, 0.2, 4
    k, alpha = L.first_exit_period(params, lam, rho, seed, chunk=97)
    traj = L.simulate(
        L.SimConfig(
            params=params, gain=L.GainSchedule.constant(lam), horizon=k + 5, seed=seed,
            step=L.StepConfig(forced=(1, 1)), pi0=1.0,
        )
    )
    p = nash_price(params)
    blk = np.column_stack([traj.intercept[:, 0] - p, traj.slope[:, 0], traj.intercept[:, 1] - p, traj.slope[:, 1]])
    first = int(np.flatnonzero(np.linalg.norm(blk, axis=1) > rho)[0]) + 1
    assert first == k
    assert np.allclose(alpha, blk[k - 1] + [p, 0, p, 0])


def test_no_exit_returns_none(params):
    assert L.first_exit_period(params, 0.001, 0.5, 0, max_periods=1000) == (None, None)


def test_decreasing_gain_converges_to_nash(params):
    # offset 100 acts as a prior weight; with offset 0 the first update
    # sets R to a rank-one matrix and the slope estimate is wild
    pN = nash_price(params)
    good = 0
    for seed in rng.derive_seeds(0, 10):
        traj = L.simulate(
            L.SimConfig(params=params, gain=L.GainSchedule.decreasing(100), horizon=200_000, seed=seed)
        )
        good += bool(
            np.all(np.abs(traj.slope[-1]) < 0.1) and np.all(np.abs(traj.intercept[-1] - pN) < 0.05)
        )
    assert good >= 8


def test_m0_belief_is_running_mean_under_harmonic_gain():
    prices = np.random.default_rng(5).uniform(0.5, 1.5, 200)
    a = 0.0
    for t, p in enumerate(prices, start=1):
        a = L.update_m0(a, p, 1.0 / t)
        assert a == pytest.approx(prices[:t].mean(), rel=1e-12)


def _fake_traj(params, b):
    b = np.asarray(b, dtype=float)
    T = len(b)
    z = np.zeros((T, 2))
    return L.SimTrajectory(params, b, b, z, b, b, z, z, z, np.zeros((T, 2, 9)))


def test_detect_episodes_hysteresis(params):
    pN = nash_price(params)
    hi = pN + 0.8 * (1.6667 - pN)
    mid = pN + 0.4 * (1.6667 - pN)
    series = [pN] * 5 + [hi] * 3 + [mid] * 3 + [pN] * 4 + [hi] * 2
    eps = L.detect_episodes(_fake_traj(params, np.column_stack([series, series])))
    assert len(eps) == 2
    assert (eps[0].start, eps[0].end, eps[0].closed) == (5, 11, True)
    assert eps[1].closed is False


def test_episode_needs_both_firms_high(params):
    pN = nash_price(params)
    series = np.column_stack([[pN, 1.5, pN], [pN, pN, pN]])
    assert L.detect_episodes(_fake_traj(params, series)) == []


def test_gain_schedule():
    g = L.GainSchedule.decreasing(10)
    assert g.value(1) == pytest.approx(1 / 11)
    assert np.allclose(g.values(1, 3), [1 / 11, 1 / 12, 1 / 13])
    with pytest.raises(ValueError):
        L.GainSchedule.constant(0.0)


def test_state_roundtrip(params):
    st = L.sce_nash_state(params, 0.3)
    back = L.FirmState.from_array(st.to_array())
    assert np.array_equal(back.to_array(), st.to_array())
