"""Escape costs: log-MGF functionals, Legendre costs and Hamiltonian shooting.

The constant-price model has everything in closed form. For the
reaction-function model the belief increment is quadratic in the shocks, so
the log-MGF is a Gaussian integral; the minimum escape cost is found by
shooting the Hamiltonian system from the equilibrium and minimizing the
cost at the exit boundary over the initial costate.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numba import njit
from scipy.integrate import trapezoid
from scipy.optimize import minimize, minimize_scalar

from . import learning, rng
from .errors import AllShotsFailed, DegenerateBelief, MgfDiverges, NoExit, NonFinite
from .market import MarketParams, nash_price
from .mean_dynamics import m1_equilibrium, m0_equilibrium, vf_m0, vf_m1

ALPHA_IDX = np.array([0, 1, 4, 5])
PENALTY = 1e6


def _positive_s2(params: MarketParams, sigma2: float | None) -> float:
    s2 = params.sigma2 if sigma2 is None else float(sigma2)
    if s2 <= 0:
        raise ValueError(f"sigma2 must be positive, got {s2}")
    return s2


# --------------------------------------------------------------------------
# constant-price model


def H_m0(theta, beta, params: MarketParams, sigma2: float | None = None) -> float:
    s2 = params.sigma2 if sigma2 is None else float(sigma2)
    beta = np.asarray(beta, dtype=float)
    return float(beta @ vf_m0(theta, params) + 0.5 * s2 * beta @ beta)


def L_m0(theta, v, sigma2: float) -> float:
    """Legendre cost of perturbation ``v``; independent of ``theta``."""
    if sigma2 <= 0:
        raise ValueError(f"sigma2 must be positive, got {sigma2}")
    v = np.asarray(v, dtype=float)
    return float(v @ v / (2.0 * sigma2))


def analytic_S_m0(a01: float, a02: float, params: MarketParams, sigma2: float | None = None) -> float:
    """Quasi-potential of the constant-price beliefs, zero at the Nash belief."""
    s2 = _positive_s2(params, sigma2)
    A, B, C = params.A, params.B, params.C
    inner = (
        A / (2 * B) * (a01 + a02)
        + C / (2 * B) * a01 * a02
        - 0.5 * (a01 * a01 + a02 * a02)
        - A * A / (2 * B * (2 * B - C))
    )
    return -2.0 / s2 * inner


def grad_S_m0(theta, params: MarketParams, sigma2: float | None = None) -> np.ndarray:
    s2 = _positive_s2(params, sigma2)
    return -2.0 / s2 * vf_m0(theta, params)


def sbar_m0(r: float, params: MarketParams, sigma2: float | None = None) -> tuple[float, float]:
    """Minimum of the quasi-potential on the circle of radius ``r`` around the
    Nash belief. Returns ``(cost, angle)`` with the angle of the minimizing
    displacement in ``[0, pi)`` (the potential is even in the displacement)."""
    if r <= 0:
        raise ValueError("r must be positive")
    s2 = _positive_s2(params, sigma2)
    c = m0_equilibrium(params)

    def f(phi):
        return analytic_S_m0(c[0] + r * np.cos(phi), c[1] + r * np.sin(phi), params, s2)

    grid = np.linspace(0, np.pi, 181)
    k = int(np.argmin([f(x) for x in grid]))
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)]
    res = minimize_scalar(f, bounds=(lo, hi), method="bounded", options={"xatol": 1e-12})
    return float(res.fun), float(res.x)


@dataclass
class EscapePath:
    """Time-ordered path from (near) the equilibrium to its end point."""

    t: np.ndarray
    theta: np.ndarray
    v: np.ndarray
    cost: float


def escape_path_m0(
    exit_point, params: MarketParams, sigma2: float | None = None, T: float = 40.0, dt: float = 1e-3
) -> EscapePath:
    """Least-cost path into ``exit_point``: the mean-dynamics path out of
    ``exit_point`` run backwards in time, with control ``v = -2 g``.

    The cost is the integral of ``|v|^2 / (2 sigma2)`` along the path.
    """
    from .mean_dynamics import integrate

    s2 = _positive_s2(params, sigma2)
    x = np.asarray(exit_point, dtype=float)
    if np.allclose(x, m0_equilibrium(params), rtol=0, atol=1e-14):
        raise ValueError("exit point coincides with the equilibrium")
    fwd = integrate(lambda y: vf_m0(y, params), x, T, dt)
    theta = fwd.x[::-1]
    t = T - fwd.t[::-1]
    g = np.array([vf_m0(y, params) for y in theta])
    v = -2.0 * g
    running = np.einsum("ij,ij->i", v, v) / (2.0 * s2)
    cost = float(trapezoid(running, t))
    return EscapePath(t, theta, v, cost)


# --------------------------------------------------------------------------
# reaction-function model: increment as a quadratic form in the shocks


@njit(cache=True)
def _psi(th, e1, e2, A, B, C, out):
    """Belief increment for shocks (e1, e2) with R^-1 taken at the current
    state; returns False if a best response or R inversion is degenerate."""
    d1 = B - C * th[1]
    d2 = B - C * th[5]
    if d1 <= 0.0 or d2 <= 0.0:
        return False
    b1 = (A + C * th[0]) / (2.0 * d1)
    b2 = (A + C * th[4]) / (2.0 * d2)
    for i in range(2):
        o = 4 * i
        if i == 0:
            bi, bj, ei, ej = b1, b2, e1, e2
        else:
            bi, bj, ei, ej = b2, b1, e2, e1
        a0 = th[o]
        a1 = th[o + 1]
        r12 = th[o + 2]
        r22 = th[o + 3]
        det = r22 - r12 * r12
        if det <= 0.0:
            return False
        x = bi + ei
        err = bj + ej - a0 - a1 * x
        out[o] = (r22 - r12 * x) / det * err
        out[o + 1] = (x - r12) / det * err
        out[o + 2] = x - r12
        out[o + 3] = x * x - r22
    return True


@njit(cache=True)
def _coefficients(th, A, B, C, a, Bv, M):
    """Per-component ``Psi_k(e) = a_k - Bv_k . e - 0.5 e' M_k e`` (exact)."""
    f0 = np.empty(8)
    fp1 = np.empty(8)
    fm1 = np.empty(8)
    fp2 = np.empty(8)
    fm2 = np.empty(8)
    f12 = np.empty(8)
    ok = _psi(th, 0.0, 0.0, A, B, C, f0)
    ok &= _psi(th, 1.0, 0.0, A, B, C, fp1)
    ok &= _psi(th, -1.0, 0.0, A, B, C, fm1)
    ok &= _psi(th, 0.0, 1.0, A, B, C, fp2)
    ok &= _psi(th, 0.0, -1.0, A, B, C, fm2)
    ok &= _psi(th, 1.0, 1.0, A, B, C, f12)
    if not ok:
        return False
    for k in range(8):
        a[k] = f0[k]
        Bv[k, 0] = -0.5 * (fp1[k] - fm1[k])
        Bv[k, 1] = -0.5 * (fp2[k] - fm2[k])
        m11 = -(fp1[k] + fm1[k] - 2.0 * f0[k])
        m22 = -(fp2[k] + fm2[k] - 2.0 * f0[k])
        M[k, 0, 0] = m11
        M[k, 1, 1] = m22
        m12 = f0[k] - Bv[k, 0] - Bv[k, 1] - 0.5 * (m11 + m22) - f12[k]
        M[k, 0, 1] = m12
        M[k, 1, 0] = m12
    return True


# status codes shared by the kernels
OK, NO_EXIT, MGF, DEGENERATE = 0, 1, 2, 3


@njit(cache=True)
def _H_parts(a, Bv, M, beta, s2):
    """H plus the pieces needed for its costate gradient.

    Returns (status, H, W^-1 (2x2 flat), u) with W = I + s2 V11 and
    u = W^-1 V01'.
    """
    v00 = 0.0
    v01a = 0.0
    v01b = 0.0
    v11aa = 0.0
    v11ab = 0.0
    v11bb = 0.0
    for k in range(8):
        bk = beta[k]
        v00 += bk * a[k]
        v01a += bk * Bv[k, 0]
        v01b += bk * Bv[k, 1]
        v11aa += bk * M[k, 0, 0]
        v11ab += bk * M[k, 0, 1]
        v11bb += bk * M[k, 1, 1]
    w11 = 1.0 + s2 * v11aa
    w12 = s2 * v11ab
    w22 = 1.0 + s2 * v11bb
    det = w11 * w22 - w12 * w12
    winv = np.empty(3)
    u = np.empty(2)
    if not (w11 > 0.0 and det > 0.0):
        return MGF, 0.0, winv, u
    winv[0] = w22 / det
    winv[1] = -w12 / det
    winv[2] = w11 / det
    u[0] = winv[0] * v01a + winv[1] * v01b
    u[1] = winv[1] * v01a + winv[2] * v01b
    quad = v01a * u[0] + v01b * u[1]
    H = v00 - 0.5 * np.log(det) + 0.5 * s2 * quad
    return OK, H, winv, u


@njit(cache=True)
def _H_m1(th, beta, s2, A, B, C):
    a = np.empty(8)
    Bv = np.empty((8, 2))
    M = np.empty((8, 2, 2))
    if not _coefficients(th, A, B, C, a, Bv, M):
        return DEGENERATE, 0.0
    st, H, winv, u = _H_parts(a, Bv, M, beta, s2)
    return st, H


@njit(cache=True)
def _rhs(th, beta, s2, A, B, C, dth, dbeta):
    """Hamiltonian field; returns (status, H). Costate gradient by central
    differences in theta, state gradient in closed form."""
    a = np.empty(8)
    Bv = np.empty((8, 2))
    M = np.empty((8, 2, 2))
    if not _coefficients(th, A, B, C, a, Bv, M):
        return DEGENERATE, 0.0
    st, H, winv, u = _H_parts(a, Bv, M, beta, s2)
    if st != OK:
        return st, 0.0
    s4 = s2 * s2
    for k in range(8):
        tr = winv[0] * M[k, 0, 0] + 2.0 * winv[1] * M[k, 0, 1] + winv[2] * M[k, 1, 1]
        bu = Bv[k, 0] * u[0] + Bv[k, 1] * u[1]
        umu = M[k, 0, 0] * u[0] * u[0] + 2.0 * M[k, 0, 1] * u[0] * u[1] + M[k, 1, 1] * u[1] * u[1]
        dth[k] = a[k] - 0.5 * s2 * tr + s2 * bu - 0.5 * s4 * umu
    tp = th.copy()
    for k in range(8):
        h = 1e-6 * (1.0 + abs(th[k]))
        tp[k] = th[k] + h
        s_p, Hp = _H_m1(tp, beta, s2, A, B, C)
        tp[k] = th[k] - h
        s_m, Hm = _H_m1(tp, beta, s2, A, B, C)
        tp[k] = th[k]
        if s_p != OK or s_m != OK:
            return MGF if (s_p == MGF or s_m == MGF) else DEGENERATE, 0.0
        dbeta[k] = -(Hp - Hm) / (2.0 * h)
    return OK, H


@njit(cache=True)
def _rk4_step(th, beta, S, h, s2, A, B, C, th_out, beta_out):
    """One RK4 step of (theta, beta, S) with dS = <beta, theta_dot> - H."""
    k1t = np.empty(8)
    k1b = np.empty(8)
    k2t = np.empty(8)
    k2b = np.empty(8)
    k3t = np.empty(8)
    k3b = np.empty(8)
    k4t = np.empty(8)
    k4b = np.empty(8)
    tt = np.empty(8)
    bb = np.empty(8)
    st, H1 = _rhs(th, beta, s2, A, B, C, k1t, k1b)
    if st != OK:
        return st, S
    s1 = np.dot(beta, k1t) - H1
    for k in range(8):
        tt[k] = th[k] + 0.5 * h * k1t[k]
        bb[k] = beta[k] + 0.5 * h * k1b[k]
    st, H2 = _rhs(tt, bb, s2, A, B, C, k2t, k2b)
    if st != OK:
        return st, S
    s2_ = np.dot(bb, k2t) - H2
    for k in range(8):
        tt[k] = th[k] + 0.5 * h * k2t[k]
        bb[k] = beta[k] + 0.5 * h * k2b[k]
    st, H3 = _rhs(tt, bb, s2, A, B, C, k3t, k3b)
    if st != OK:
        return st, S
    s3 = np.dot(bb, k3t) - H3
    for k in range(8):
        tt[k] = th[k] + h * k3t[k]
        bb[k] = beta[k] + h * k3b[k]
    st, H4 = _rhs(tt, bb, s2, A, B, C, k4t, k4b)
    if st != OK:
        return st, S
    s4 = np.dot(bb, k4t) - H4
    for k in range(8):
        th_out[k] = th[k] + h / 6.0 * (k1t[k] + 2 * k2t[k] + 2 * k3t[k] + k4t[k])
        beta_out[k] = beta[k] + h / 6.0 * (k1b[k] + 2 * k2b[k] + 2 * k3b[k] + k4b[k])
    return OK, S + h / 6.0 * (s1 + 2 * s2_ + 2 * s3 + s4)


@njit(cache=True)
def _alpha_dist(th, ref):
    return np.sqrt(
        (th[0] - ref[0]) ** 2 + (th[1] - ref[1]) ** 2 + (th[4] - ref[2]) ** 2 + (th[5] - ref[3]) ** 2
    )


@njit(cache=True)
def _shoot_kernel(th0, beta0, rho, ref, dt, tmax, s2, A, B, C, record, path):
    """Integrate until the belief block leaves the rho-ball around ``ref``.

    Returns (status, T, S, n_recorded, theta_T, beta_T). When ``record`` is
    set, rows of ``path`` hold (t, theta(8), beta(8), S).
    """
    th = th0.copy()
    beta = beta0.copy()
    nth = np.empty(8)
    nbeta = np.empty(8)
    S = 0.0
    t = 0.0
    n = 0
    if record:
        path[0, 0] = 0.0
        path[0, 1:9] = th
        path[0, 9:17] = beta
        path[0, 17] = 0.0
        n = 1
    nsteps = int(np.ceil(tmax / dt - 1e-9))
    for step in range(nsteps):
        st, Sn = _rk4_step(th, beta, S, dt, s2, A, B, C, nth, nbeta)
        if st != OK:
            return st, t, S, n, th, beta
        for k in range(8):
            if not np.isfinite(nth[k]) or not np.isfinite(nbeta[k]):
                return DEGENERATE, t, S, n, th, beta
        if _alpha_dist(nth, ref) >= rho:
            lo = 0.0
            hi = dt
            while hi - lo > 1e-8:
                mid = 0.5 * (lo + hi)
                st, Sm = _rk4_step(th, beta, S, mid, s2, A, B, C, nth, nbeta)
                if st == OK and _alpha_dist(nth, ref) < rho:
                    lo = mid
                else:
                    hi = mid
            st, Sn = _rk4_step(th, beta, S, hi, s2, A, B, C, nth, nbeta)
            if st != OK:
                return st, t, S, n, th, beta
            t += hi
            if record:
                path[n, 0] = t
                path[n, 1:9] = nth
                path[n, 9:17] = nbeta
                path[n, 17] = Sn
                n += 1
            return OK, t, Sn, n, nth, nbeta
        th[:] = nth
        beta[:] = nbeta
        S = Sn
        t += dt
        if record:
            path[n, 0] = t
            path[n, 1:9] = th
            path[n, 9:17] = beta
            path[n, 17] = S
            n += 1
    return NO_EXIT, t, S, n, th, beta


def _check_theta(theta) -> np.ndarray:
    th = np.asarray(theta, dtype=float)
    if th.shape != (8,):
        raise ValueError(f"theta must have 8 components, got shape {th.shape}")
    return th


def psi_m1(theta, eps, params: MarketParams) -> np.ndarray:
    """Belief increment of the reaction-function model for shocks ``eps``."""
    out = np.empty(8)
    if not _psi(_check_theta(theta), float(eps[0]), float(eps[1]), params.A, params.B, params.C, out):
        raise DegenerateBelief("inadmissible belief (best response or R degenerate)")
    return out


def quadratic_decompose_m1(theta, beta, params: MarketParams) -> tuple[float, np.ndarray, np.ndarray]:
    """``(V00, V01, V11)`` with ``<beta, Psi(theta, e)> = V00 - V01.e - 0.5 e'V11 e``."""
    th = _check_theta(theta)
    beta = np.asarray(beta, dtype=float)
    a, Bv, M = np.empty(8), np.empty((8, 2)), np.empty((8, 2, 2))
    if not _coefficients(th, params.A, params.B, params.C, a, Bv, M):
        raise DegenerateBelief("inadmissible belief (best response or R degenerate)")
    return float(beta @ a), beta @ Bv, np.einsum("k,kij->ij", beta, M)


def H_m1(theta, beta, params: MarketParams, sigma2: float | None = None) -> float:
    """Log-MGF of ``<beta, Psi>`` for Gaussian shocks of variance sigma2."""
    s2 = _positive_s2(params, sigma2)
    V00, V01, V11 = quadratic_decompose_m1(theta, beta, params)
    W = np.eye(2) + s2 * V11
    if not (W[0, 0] > 0 and np.linalg.det(W) > 0):
        raise MgfDiverges("I + sigma2*V11 is not positive definite")
    _, logdet = np.linalg.slogdet(W)
    return float(V00 - 0.5 * logdet + 0.5 * s2 * V01 @ np.linalg.solve(W, V01))


def H_beta_m1(theta, beta, params: MarketParams, sigma2: float | None = None) -> np.ndarray:
    """Closed-form gradient of ``H_m1`` in the costate (the tilted mean)."""
    s2 = _positive_s2(params, sigma2)
    dth, dbeta = np.empty(8), np.empty(8)
    st, _ = _rhs(_check_theta(theta), np.asarray(beta, float), s2, params.A, params.B, params.C, dth, dbeta)
    _raise_status(st)
    return dth


def _raise_status(st: int):
    if st == MGF:
        raise MgfDiverges("I + sigma2*V11 is not positive definite")
    if st == DEGENERATE:
        raise NonFinite("belief left the admissible region")


# --------------------------------------------------------------------------
# generic Hamiltonian field


def hamiltonian_vf(
    theta, beta, H: Callable[[np.ndarray, np.ndarray], float], rel_step: float = 1e-6
) -> tuple[np.ndarray, np.ndarray, float]:
    """``(theta_dot, beta_dot, dS)`` from central differences of ``H``.

    ``dS = <beta, theta_dot> - H`` is the running cost along extremals.
    """
    theta = np.asarray(theta, dtype=float)
    beta = np.asarray(beta, dtype=float)

    def grad(f, x):
        out = np.empty_like(x)
        for k in range(x.size):
            h = rel_step * (1.0 + abs(x[k]))
            e = np.zeros_like(x)
            e[k] = h
            out[k] = (f(x + e) - f(x - e)) / (2 * h)
        return out

    th_dot = grad(lambda b: H(theta, b), beta)
    b_dot = -grad(lambda t: H(t, beta), theta)
    return th_dot, b_dot, float(beta @ th_dot - H(theta, beta))


# --------------------------------------------------------------------------
# shooting


@dataclass
class EscapeSolution:
    """Shot path from the start point to the exit sphere.

    ``path`` rows are ``(t, theta..., beta..., S)``.
    """

    path: np.ndarray
    exit_time: float
    exit_point: np.ndarray
    cost: float
    beta0: np.ndarray

    @property
    def t(self):
        return self.path[:, 0]

    @property
    def theta(self):
        n = self.exit_point.size
        return self.path[:, 1 : 1 + n]

    @property
    def beta(self):
        n = self.exit_point.size
        return self.path[:, 1 + n : 1 + 2 * n]

    @property
    def S(self):
        return self.path[:, -1]


@njit(cache=True)
def _m0_rhs(y, k, c, s2, out):
    g1 = c + k * y[1] - y[0]
    g2 = c + k * y[0] - y[1]
    b1, b2 = y[2], y[3]
    out[0] = g1 + s2 * b1
    out[1] = g2 + s2 * b2
    out[2] = b1 - k * b2
    out[3] = b2 - k * b1
    H = b1 * g1 + b2 * g2 + 0.5 * s2 * (b1 * b1 + b2 * b2)
    out[4] = b1 * out[0] + b2 * out[1] - H


@njit(cache=True)
def _m0_rk4(y, h, k, c, s2, out):
    k1 = np.empty(5)
    k2 = np.empty(5)
    k3 = np.empty(5)
    k4 = np.empty(5)
    _m0_rhs(y, k, c, s2, k1)
    _m0_rhs(y + 0.5 * h * k1, k, c, s2, k2)
    _m0_rhs(y + 0.5 * h * k2, k, c, s2, k3)
    _m0_rhs(y + h * k3, k, c, s2, k4)
    out[:] = y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


@njit(cache=True)
def _shoot_m0_kernel(y0, rho, ref, dt, tmax, s2, k, c, record, path):
    y = y0.copy()
    yn = np.empty(5)
    t = 0.0
    n = 0
    if record:
        path[0, 0] = 0.0
        path[0, 1:] = y
        n = 1
    nsteps = int(np.ceil(tmax / dt - 1e-9))
    for _ in range(nsteps):
        _m0_rk4(y, dt, k, c, s2, yn)
        if np.hypot(yn[0] - ref[0], yn[1] - ref[1]) >= rho:
            lo, hi = 0.0, dt
            while hi - lo > 1e-8:
                mid = 0.5 * (lo + hi)
                _m0_rk4(y, mid, k, c, s2, yn)
                if np.hypot(yn[0] - ref[0], yn[1] - ref[1]) < rho:
                    lo = mid
                else:
                    hi = mid
            _m0_rk4(y, hi, k, c, s2, yn)
            t += hi
            if record:
                path[n, 0] = t
                path[n, 1:] = yn
                n += 1
            return OK, t, n, yn
        y[:] = yn
        t += dt
        if record:
            path[n, 0] = t
            path[n, 1:] = y
            n += 1
    return NO_EXIT, t, n, y


def _shoot_m0(beta0, rho, params, s2, tmax, dt, theta0, record=True):
    y0 = np.concatenate([theta0, beta0, [0.0]])
    nmax = int(np.ceil(tmax / dt - 1e-9)) + 2 if record else 1
    path = np.empty((nmax, 6))
    k = params.C / (2 * params.B)
    c = params.A / (2 * params.B)
    st, t, n, y = _shoot_m0_kernel(
        y0, float(rho), m0_equilibrium(params), float(dt), float(tmax), s2, k, c, record, path
    )
    if st == NO_EXIT:
        raise NoExit(f"no exit from radius {rho} by t={tmax}")
    return path[:n].copy(), t, y


def shoot(
    beta0,
    rho: float,
    params: MarketParams,
    sigma2: float | None = None,
    Tmax: float = 50.0,
    dt: float = 0.005,
    model: str = "m1",
    theta0=None,
    record: bool = True,
) -> EscapeSolution:
    """Integrate the Hamiltonian system from ``theta0`` (default: the
    equilibrium) with initial costate ``beta0`` until the belief block is at
    distance ``rho`` from the equilibrium beliefs.

    ``model="m1"`` uses the 8-dimensional reaction-function system and
    measures distance on the joint (alpha0, alpha1) block of both firms;
    ``model="m0"`` uses the 2-dimensional constant-price system.
    """
    if rho <= 0:
        raise ValueError("rho must be positive")
    s2 = _positive_s2(params, sigma2)
    beta0 = np.asarray(beta0, dtype=float)
    if model == "m0":
        th0 = m0_equilibrium(params) if theta0 is None else np.asarray(theta0, float)
        path, T, y = _shoot_m0(beta0, rho, params, s2, Tmax, dt, th0, record)
        return EscapeSolution(path, T, y[:2].copy(), float(y[-1]), beta0)
    if model != "m1":
        raise ValueError(f"unknown model {model!r}")
    eq = m1_equilibrium(params, s2)
    th0 = eq if theta0 is None else _check_theta(theta0)
    ref = eq[ALPHA_IDX]
    nmax = int(np.ceil(Tmax / dt - 1e-9)) + 2 if record else 1
    buf = np.empty((nmax, 18))
    st, T, S, n, th, be = _shoot_kernel(
        th0, beta0, float(rho), ref, float(dt), float(Tmax), s2,
        params.A, params.B, params.C, record, buf,
    )
    if st == NO_EXIT:
        raise NoExit(f"no exit from radius {rho} by t={Tmax}")
    _raise_status(st)
    return EscapeSolution(buf[:n].copy(), float(T), th.copy(), float(S), beta0)


def shot_cost(beta0, rho, params, s2, Tmax=50.0, dt=0.005, penalty=PENALTY) -> float:
    """Exit cost for one initial costate, with ``penalty`` for failed shots."""
    eq = m1_equilibrium(params, s2)
    buf = np.empty((1, 18))
    st, T, S, n, th, be = _shoot_kernel(
        eq, np.asarray(beta0, float), float(rho), eq[ALPHA_IDX], float(dt), float(Tmax),
        s2, params.A, params.B, params.C, False, buf,
    )
    if st != OK or not np.isfinite(S):
        return penalty
    return float(S)


# --------------------------------------------------------------------------
# minimum escape cost for the reaction-function model


@dataclass(frozen=True)
class SearchConfig:
    """Multi-start Nelder-Mead settings for ``rate_function_m1``.

    Restart costates are zero-mean Gaussian, with standard deviation
    ``alpha_scale`` on the belief block and ``r_scale`` on the moment block.
    """

    restarts: int = 16
    alpha_scale: float = 1.0
    r_scale: float = 1.0
    maxfev: int = 400
    xatol: float = 1e-4
    fatol: float = 1e-6
    Tmax: float = 50.0
    dt: float = 0.005
    seed: int = 0
    penalty: float = PENALTY

    def draw(self, n: int, salt: int = 0) -> np.ndarray:
        z = np.stack(
            [rng.standard_normals(self.seed, np.arange(n), k, stream=1 + salt) for k in range(8)],
            axis=1,
        )
        scale = np.array([self.alpha_scale, self.alpha_scale, self.r_scale, self.r_scale] * 2)
        return z * scale


@dataclass
class RateResult:
    rho: float
    cost: float
    beta0: np.ndarray
    solution: EscapeSolution | None
    failed_restarts: int
    restart_costs: np.ndarray = field(repr=False)


def rate_function_m1(
    rho: float,
    params: MarketParams,
    sigma2: float | None = None,
    search: SearchConfig = SearchConfig(),
    warm_starts: list | None = None,
) -> RateResult:
    """Minimum escape cost from the rho-ball over initial costates.

    Each start point (random draws plus any ``warm_starts``) is polished by
    Nelder-Mead on the penalized shot cost.
    """
    if rho <= 0:
        raise ValueError("rho must be positive")
    s2 = _positive_s2(params, sigma2)
    starts = list(search.draw(search.restarts, salt=int(round(rho * 1e6)) % 65521))
    if warm_starts:
        starts.extend(np.asarray(w, dtype=float) for w in warm_starts)

    def f(b):
        return shot_cost(b, rho, params, s2, search.Tmax, search.dt, search.penalty)

    best_x, best_f = None, np.inf
    costs = []
    failed = 0
    for x0 in starts:
        res = minimize(
            f, x0, method="Nelder-Mead",
            options={"maxfev": search.maxfev, "xatol": search.xatol, "fatol": search.fatol,
                     "adaptive": True},
        )
        costs.append(res.fun)
        if res.fun >= search.penalty:
            failed += 1
            continue
        if res.fun < best_f:
            best_f, best_x = float(res.fun), res.x
    if best_x is None:
        raise AllShotsFailed(f"no restart produced an exit from radius {rho}")
    sol = shoot(best_x, rho, params, s2, search.Tmax, search.dt)
    return RateResult(float(rho), best_f, best_x, sol, failed, np.array(costs))


def rate_curve_m1(
    rhos, params: MarketParams, sigma2: float | None = None, search: SearchConfig = SearchConfig()
) -> tuple[np.ndarray, np.ndarray, list[RateResult]]:
    """``(raw, running_max, results)`` over increasing radii, warm-starting
    each radius from the previous optimum."""
    rhos = np.asarray(rhos, dtype=float)
    if np.any(np.diff(rhos) <= 0):
        raise ValueError("radii must be strictly increasing")
    results, warm = [], None
    for r in rhos:
        res = rate_function_m1(r, params, sigma2, search, warm_starts=warm)
        results.append(res)
        warm = [res.beta0]
    raw = np.array([r.cost for r in results])
    return raw, np.maximum.accumulate(raw), results


def rate_function_m0_shot(
    rho: float,
    params: MarketParams,
    sigma2: float | None = None,
    restarts: int = 4,
    Tmax: float = 60.0,
    dt: float = 0.01,
) -> RateResult:
    """Minimum escape cost of the constant-price model found by shooting.

    The costate is searched in polar form (log magnitude, angle) from
    ``restarts`` evenly spaced angles; this is an independent numerical check
    of ``sbar_m0``.
    """
    if rho <= 0:
        raise ValueError("rho must be positive")
    s2 = _positive_s2(params, sigma2)

    def polar(z):
        return np.exp(z[0]) * np.array([np.cos(z[1]), np.sin(z[1])])

    def f(z):
        try:
            return shoot(polar(z), rho, params, s2, Tmax, dt, model="m0", record=False).cost
        except NoExit:
            return PENALTY

    best, costs = None, []
    for phi in np.linspace(0, 2 * np.pi, restarts, endpoint=False):
        res = minimize(
            f, [np.log(1e-2 / s2), phi], method="Nelder-Mead",
            options={"xatol": 1e-9, "fatol": 1e-12, "maxfev": 600},
        )
        costs.append(res.fun)
        if res.fun < PENALTY and (best is None or res.fun < best.fun):
            best = res
    failed = sum(c >= PENALTY for c in costs)
    if best is None:
        raise AllShotsFailed(f"no restart produced an exit from radius {rho}")
    b0 = polar(best.x)
    sol = shoot(b0, rho, params, s2, Tmax, dt, model="m0")
    return RateResult(float(rho), float(best.fun), b0, sol, failed, np.array(costs))


def rate_curve_m0(rhos, params: MarketParams, sigma2: float | None = None) -> np.ndarray:
    return np.array([sbar_m0(r, params, sigma2)[0] for r in rhos])


# --------------------------------------------------------------------------
# simulated escape times


@dataclass
class EscapeTimeRow:
    gain: float
    mean_periods: float
    mean_time: float
    se_time: float
    log_scaled: float
    exit_dispersion: float
    n_exits: int
    n_runs: int


def escape_time_scaling(
    params: MarketParams,
    gains,
    rho: float,
    seeds: list[int],
    sigma2: float | None = None,
    max_periods: int = 2_000_000,
) -> list[EscapeTimeRow]:
    """Mean first-exit times of forced reaction-function runs from the
    rho-ball, per gain.

    ``mean_time`` is in continuous units (gain x periods), the clock on which
    the mean dynamics and escape costs are defined; ``log_scaled`` is
    ``gain * log(mean_time)``. ``exit_dispersion`` is the mean angular
    distance of exit directions from their mean direction. Runs that never
    exit are counted at ``max_periods`` (a lower bound).
    """
    gains = [float(g) for g in gains]
    if len(gains) < 2:
        raise ValueError("need at least two gains")
    p = params if sigma2 is None else params.with_sigma2(sigma2)
    ref = np.array([nash_price(p), 0.0, nash_price(p), 0.0])
    rows = []
    for lam in gains:
        periods, dirs = [], []
        for seed in seeds:
            k, alpha = learning.first_exit_period(p, lam, rho, seed, max_periods=max_periods)
            if k is None:
                periods.append(max_periods)
                continue
            periods.append(k)
            d = alpha - ref
            dirs.append(d / np.linalg.norm(d))
        periods = np.array(periods, dtype=float)
        mean_p = periods.mean()
        mean_t = lam * mean_p
        se_t = lam * periods.std(ddof=1) / np.sqrt(len(periods)) if len(periods) > 1 else float("nan")
        if dirs:
            D = np.array(dirs)
            m = D.mean(axis=0)
            m /= np.linalg.norm(m)
            disp = float(np.mean(np.arccos(np.clip(D @ m, -1, 1))))
        else:
            disp = float("nan")
        rows.append(
            EscapeTimeRow(lam, mean_p, mean_t, se_t, lam * np.log(mean_t), disp, len(dirs), len(seeds))
        )
    return rows
