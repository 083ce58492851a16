import numpy as np
import pytest
from scipy.optimize import minimize

from duopoly_escapes import large_deviations as ld
from duopoly_escapes import mean_dynamics as md
from duopoly_escapes.errors import MgfDiverges, NoExit
from duopoly_escapes.market import MarketParams, nash_price

S2 = 0.0025
THETA = np.array([0.72, 0.08, 0.74, 0.6, 0.75, 0.03, 0.76, 0.6])


def psi_oracle(theta, e, params):
    """Unit-gain belief increment computed directly from the update rule."""
    A, B, C = params.A, params.B, params.C
    th = theta.reshape(2, 4)
    b = [(A + C * t[0]) / (2 * (B - C * t[1])) for t in th]
    out = []
    for i in (0, 1):
        a0, a1, r12, r22 = th[i]
        R = np.array([[1.0, r12], [r12, r22]])
        x = b[i] + e[i]
        err = b[1 - i] + e[1 - i] - a0 - a1 * x
        out += list(np.linalg.solve(R, [1.0, x]) * err) + [x - r12, x * x - r22]
    return np.array(out)


def test_psi_matches_update_rule(params):
    for e in ([0.0, 0.0], [0.05, -0.03], [-0.2, 0.1]):
        assert np.allclose(ld.psi_m1(THETA, e, params), psi_oracle(THETA, np.array(e), params), atol=1e-12)


def test_quadratic_decomposition_exact(params):
    beta = np.linspace(-1, 1, 8)
    V00, V01, V11 = ld.quadratic_decompose_m1(THETA, beta, params)
    for e in np.random.default_rng(0).normal(0, 0.3, (10, 2)):
        direct = beta @ ld.psi_m1(THETA, e, params)
        assert direct == pytest.approx(V00 - V01 @ e - 0.5 * e @ V11 @ e, abs=1e-11)


def test_H_zero_costate_and_convexity(params):
    assert ld.H_m1(THETA, np.zeros(8), params, S2) == 0.0
    b1, b2 = np.full(8, 0.5), -np.linspace(0, 2, 8)
    mid = ld.H_m1(THETA, 0.5 * (b1 + b2), params, S2)
    assert mid <= 0.5 * (ld.H_m1(THETA, b1, params, S2) + ld.H_m1(THETA, b2, params, S2))


def test_H_gradient_at_zero_is_mean_dynamics(params):
    # the zero-costate tilt is the expected increment
    assert np.allclose(ld.H_beta_m1(THETA, np.zeros(8), params, S2), md.vf_m1(THETA, params, S2), atol=1e-12)


def test_H_beta_matches_finite_differences(params):
    beta = np.array([1.0, -2.0, 0.5, 3.0, -1.0, 2.0, 0.2, -0.4])
    num = md.numerical_jacobian(lambda b: [ld.H_m1(THETA, b, params, S2)], beta)[0]
    assert np.allclose(ld.H_beta_m1(THETA, beta, params, S2), num, atol=1e-7)


def test_H_diverges_for_large_costate(params):
    beta = np.zeros(8)
    beta[3] = 1e4  # tilt on x^2 beyond 1/(2 sigma2)
    with pytest.raises(MgfDiverges):
        ld.H_m1(THETA, beta, params, S2)


def test_hamiltonian_vf_m0(params):
    th, be = np.array([0.8, 0.9]), np.array([1.0, -2.0])
    thd, bd, dS = ld.hamiltonian_vf(th, be, lambda t, b: ld.H_m0(t, b, params, S2))
    assert np.allclose(thd, md.vf_m0(th, params) + S2 * be, atol=1e-8)
    assert np.allclose(bd, -md.jacobian_m0(params).T @ be, atol=1e-8)
    assert dS == pytest.approx(0.5 * S2 * be @ be, abs=1e-8)


def test_legendre_pair_m0(params):
    th, v = np.array([0.8, 0.75]), np.array([0.01, -0.02])
    g = md.vf_m0(th, params)
    res = minimize(lambda b: -(b @ (g + v) - ld.H_m0(th, b, params, S2)), np.zeros(2))
    assert -res.fun == pytest.approx(ld.L_m0(th, v, S2), rel=1e-6)


def test_quasi_potential_solves_hamilton_jacobi(params):
    for th in np.random.default_rng(1).uniform(0.5, 1.2, (5, 2)):
        grad = ld.grad_S_m0(th, params, S2)
        assert ld.H_m0(th, grad, params, S2) == pytest.approx(0, abs=1e-9)
        num = md.numerical_jacobian(lambda x: [ld.analytic_S_m0(*x, params, S2)], th)[0]
        assert np.allclose(grad, num, rtol=1e-6)


def test_sbar_m0_closed_form(params):
    for r in (0.05, 0.3):
        cost, phi = ld.sbar_m0(r, params, S2)
        assert cost == pytest.approx(0.65 * r * r / S2, rel=1e-10)
        assert phi == pytest.approx(np.pi / 4, abs=1e-5)


def test_m0_shot_matches_closed_form(params):
    r = ld.rate_function_m0_shot(0.2, params, S2)
    assert r.cost == pytest.approx(0.65 * 0.04 / S2, abs=1e-4)
    assert np.linalg.norm(r.solution.exit_point - nash_price(params)) == pytest.approx(0.2, abs=1e-6)


def test_m1_shot_path_properties(params):
    beta0 = np.array([0.02, 0.05, 0.0, 0.0, 0.02, 0.05, 0.0, 0.0])
    sol = ld.shoot(beta0, 0.1, params, S2)
    assert sol.S[0] == 0.0
    assert np.all(np.diff(sol.S) >= -1e-12)
    eq = md.m1_equilibrium(params, S2)
    d = np.linalg.norm(sol.exit_point[ld.ALPHA_IDX] - eq[ld.ALPHA_IDX])
    assert d == pytest.approx(0.1, abs=1e-6)
    assert sol.cost == pytest.approx(sol.S[-1])


def test_m1_shot_follows_hamiltonian_field(params):
    beta0 = np.array([0.02, 0.05, 0.0, 0.0, 0.02, 0.05, 0.0, 0.0])
    sol = ld.shoot(beta0, 0.1, params, S2, dt=0.005)
    H = lambda t, b: ld.H_m1(t, b, params, S2)
    k = len(sol.t) // 2
    thd, bd, _ = ld.hamiltonian_vf(sol.theta[k], sol.beta[k], H)
    num_thd = (sol.theta[k + 1] - sol.theta[k - 1]) / (sol.t[k + 1] - sol.t[k - 1])
    num_bd = (sol.beta[k + 1] - sol.beta[k - 1]) / (sol.t[k + 1] - sol.t[k - 1])
    assert np.allclose(thd, num_thd, atol=1e-5)
    assert np.allclose(bd, num_bd, atol=1e-4)


def test_zero_costate_never_exits(params):
    with pytest.raises(NoExit):
        ld.shoot(np.zeros(8), 0.1, params, S2, Tmax=5.0)
    assert ld.shot_cost(np.zeros(8), 0.1, params, S2, Tmax=5.0) == ld.PENALTY


def test_rate_function_m1_small_search(params):
    search = ld.SearchConfig(restarts=2, alpha_scale=0.1, r_scale=0.1, maxfev=80)
    r = ld.rate_function_m1(0.1, params, S2, search)
    assert 0 < r.cost < ld.PENALTY
    assert r.solution.cost == pytest.approx(r.cost)


def test_search_draws_are_reproducible():
    a = ld.SearchConfig(seed=3).draw(4)
    assert np.array_equal(a, ld.SearchConfig(seed=3).draw(4))
    assert a.shape == (4, 8)


def test_escape_time_scaling_small(params):
    rows = ld.escape_time_scaling(params, [0.02, 0.01], 0.3, list(range(5)), sigma2=0.01)
    assert [r.gain for r in rows] == [0.02, 0.01]
    assert all(r.n_exits == r.n_runs == 5 for r in rows)
    assert rows[0].mean_periods < rows[1].mean_periods


def test_positive_variance_required(params):
    with pytest.raises(ValueError):
        ld.sbar_m0(0.1, MarketParams(sigma2=0.0))
