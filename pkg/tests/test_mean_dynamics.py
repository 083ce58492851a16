import numpy as np
import pytest
from scipy.linalg import expm

from duopoly_escapes import mean_dynamics as md
from duopoly_escapes.errors import NoRealRoots, NonFinite
from duopoly_escapes.market import MarketParams, nash_price

S2 = 0.0025


def test_m0_field_and_jacobian(params):
    eq = md.m0_equilibrium(params)
    assert np.allclose(md.vf_m0(eq, params), 0, atol=1e-15)
    J = md.numerical_jacobian(lambda x: md.vf_m0(x, params), eq)
    assert np.allclose(J, md.jacobian_m0(params), atol=1e-9)
    assert np.allclose(np.sort(np.linalg.eigvals(J).real), [-1.35, -0.65], atol=1e-8)


def test_m1_equilibrium_is_rest_point(params):
    assert np.allclose(md.vf_m1(md.m1_equilibrium(params, S2), params, S2), 0, atol=1e-15)


def test_expected_update_matches_monte_carlo(params):
    theta = np.array([0.7, 0.15, 0.75, 0.05])
    g = np.random.default_rng(0)
    e = g.normal(0, np.sqrt(S2), (2_000_000, 2))
    A, B, C = params.A, params.B, params.C
    b = [(A + C * theta[2 * i]) / (2 * (B - C * theta[2 * i + 1])) for i in (0, 1)]
    mc = []
    for i in (0, 1):
        x = b[i] + e[:, i]
        err = b[1 - i] + e[:, 1 - i] - theta[2 * i] - theta[2 * i + 1] * x
        mc += [err.mean(), (x * err).mean()]
    assert np.allclose(md.m1_expected_update(theta, params, S2), mc, atol=2e-4)


def test_expected_update_derivative_row(params):
    # d g_0 / d(alpha0_1, alpha1_1, alpha0_2, alpha1_2) at the equilibrium
    J = md.m1_alpha_jacobian(params, S2)
    p, B, C = nash_price(params), params.B, params.C
    assert np.allclose(J[0], [-1, -p, C / (2 * B), C * p / B], atol=1e-8)


def test_scaled_belief_jacobian_spectrum(params):
    ev = np.sort(np.linalg.eigvals(md.m1_alpha_jacobian(params, S2, scaled=True)).real)
    assert np.allclose(ev, [-1.35, -1.0, -1.0, -0.65], atol=1e-6)


def test_reference_matrix_closed_form_spectrum(params):
    ev = np.sort(np.linalg.eigvals(md.m1_reference_jacobian(params, S2)).real)
    assert np.allclose(ev, md.m1_reference_eigenvalues(params, S2), atol=1e-10)


def test_rk4_linear_system_against_matrix_exponential():
    M = np.array([[-0.5, 1.0], [-1.0, -0.2]])
    x0 = np.array([1.0, 0.3])
    tr = md.integrate(lambda x: M @ x, x0, 5.0, 0.01)
    assert np.allclose(tr.final, expm(5.0 * M) @ x0, atol=1e-9)
    assert tr.t[-1] == 5.0


def test_rk4_order_four():
    f = lambda x: -x
    err = [abs(md.integrate(f, [1.0], 1.0, h).final[0] - np.exp(-1)) for h in (0.1, 0.05)]
    assert 14 < err[0] / err[1] < 18


def test_integrate_flags_blowup():
    with pytest.raises(NonFinite), np.errstate(over="ignore", invalid="ignore"):
        md.integrate(lambda x: x * x, [1.0], 2.0, 0.01)


def test_thresholds_are_zeros_of_reduced_slope_field(params):
    lo, hi, _ = md.self_reinforcing_thresholds(params, S2)
    for a in (lo, hi):
        assert md.reduced_slope_vf(a, a, params, S2)[0] == pytest.approx(0, abs=1e-12)
    mid = 0.5 * (lo + hi)
    assert md.reduced_slope_vf(mid, mid, params, S2)[0] > 0
    assert md.reduced_slope_vf(0.5 * lo, 0.5 * lo, params, S2)[0] < 0
    assert md.reduced_slope_vf(0.999, 0.999, params, S2)[0] < 0


def test_threshold_values(params):
    lo, hi, beta = md.self_reinforcing_thresholds(params, S2)
    assert lo == pytest.approx(0.0340, abs=5e-4)
    assert hi == pytest.approx(0.9968, abs=5e-4)
    assert lo < hi < 1


def test_band_disappears_above_existence_bound(params):
    s2max = md.existence_bound_sigma2(params)
    md.self_reinforcing_thresholds(params, 0.99 * s2max)
    with pytest.raises(NoRealRoots):
        md.self_reinforcing_thresholds(params, 1.01 * s2max)


def test_direction_sign_pattern(params):
    assert md.direction_along_ray(0.0, params, S2) == 0.0
    L = md.ray_length(params)
    assert md.direction_along_ray(0.01, params, S2) < 0
    assert md.direction_along_ray(0.3, params, S2) > 0
    assert md.direction_along_ray(0.999 * L, params, S2) < 0


def test_stability_radius_is_zero_of_direction(params):
    r = md.stability_radius(params, S2)
    assert md.direction_along_ray(r, params, S2) == pytest.approx(0, abs=1e-10)
    assert 0 < r < md.escape_boundary(params, S2) < md.ray_length(params)


def test_ray_endpoints(params):
    assert md.ray_point(0, params) == (nash_price(params), 0.0)
    a0, a1 = md.ray_point(md.ray_length(params), params)
    assert a0 == pytest.approx(0, abs=1e-15) and a1 == pytest.approx(1)


def test_ode_arc_from_near_equilibrium(params):
    eq = md.m1_equilibrium(params, S2)
    x0 = eq.copy()
    a0, a1 = md.ray_point(0.1 * md.ray_length(params), params)
    x0[[0, 1, 4, 5]] = (a0, a1, a0, a1)
    tr = md.integrate(lambda x: md.vf_m1(x, params, S2), x0, 40.0, 0.01)
    slopes = tr.x[:, 1]
    assert slopes.max() > 0.9
    assert abs(slopes[-1]) < 0.05


def test_ode_from_inside_stability_radius_returns(params):
    eq = md.m1_equilibrium(params, S2)
    r = 0.5 * md.stability_radius(params, S2)
    x0 = eq.copy()
    a0, a1 = md.ray_point(r, params)
    x0[[0, 1, 4, 5]] = (a0, a1, a0, a1)
    tr = md.integrate(lambda x: md.vf_m1(x, params, S2), x0, 40.0, 0.01)
    assert tr.x[:, 1].max() < 0.1
    assert np.linalg.norm(tr.final - eq) < 1e-3
