"""Small-gain ODE limits of the learning algorithm and their local geometry.

State layouts:

* constant-price model: ``(a01, a02)``, each firm's estimate of its rival's price
* reaction-function model: 8 components, per firm ``(alpha0, alpha1, r12, r22)``
  with the second-moment matrix ``[[1, r12], [r12, r22]]``
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import bisect

from .errors import DegenerateBelief, NoRealRoots, NoSignChange, NonFinite, SingularR
from .market import MarketParams, nash_price


def _s2(params: MarketParams, sigma2: float | None) -> float:
    return params.sigma2 if sigma2 is None else float(sigma2)


def _br(params: MarketParams, a0: float, a1: float) -> float:
    denom = params.B - params.C * a1
    if denom <= 0:
        raise DegenerateBelief(f"B - C*alpha1 = {denom:.3g} <= 0")
    return (params.A + params.C * a0) / (2.0 * denom)


# --------------------------------------------------------------------------
# constant-price model


def vf_m0(state, params: MarketParams) -> np.ndarray:
    a1, a2 = state
    k = params.C / (2.0 * params.B)
    c = params.A / (2.0 * params.B)
    return np.array([c + k * a2 - a1, c + k * a1 - a2])


def jacobian_m0(params: MarketParams) -> np.ndarray:
    k = params.C / (2.0 * params.B)
    return np.array([[-1.0, k], [k, -1.0]])


def m0_equilibrium(params: MarketParams) -> np.ndarray:
    p = nash_price(params)
    return np.array([p, p])


# --------------------------------------------------------------------------
# reaction-function model


def m1_expected_update(theta, params: MarketParams, sigma2: float | None = None) -> np.ndarray:
    """Expected RLS innovation ``g`` for the stacked beliefs
    ``(alpha0_1, alpha1_1, alpha0_2, alpha1_2)``, before scaling by R^-1."""
    s2 = _s2(params, sigma2)
    theta = np.asarray(theta, dtype=float)
    b = (_br(params, theta[0], theta[1]), _br(params, theta[2], theta[3]))
    out = np.empty(4)
    for i in (0, 1):
        a0, a1 = theta[2 * i], theta[2 * i + 1]
        G0 = b[1 - i] - a0 - a1 * b[i]
        out[2 * i] = G0
        out[2 * i + 1] = G0 * b[i] - a1 * s2
    return out


def vf_m1(state, params: MarketParams, sigma2: float | None = None) -> np.ndarray:
    """Belief drift ``R^-1 g`` and relaxation of R toward its induced value."""
    s2 = _s2(params, sigma2)
    x = np.asarray(state, dtype=float)
    theta = x[[0, 1, 4, 5]]
    g = m1_expected_update(theta, params, s2)
    out = np.empty(8)
    for i in (0, 1):
        a0, a1, r12, r22 = x[4 * i : 4 * i + 4]
        det = r22 - r12 * r12
        if not np.isfinite(det) or det <= 0:
            raise SingularR(f"second-moment matrix not positive definite (det={det:.3g})")
        g0, g1 = g[2 * i], g[2 * i + 1]
        out[4 * i] = (r22 * g0 - r12 * g1) / det
        out[4 * i + 1] = (g1 - r12 * g0) / det
        b = _br(params, a0, a1)
        out[4 * i + 2] = b - r12
        out[4 * i + 3] = b * b + s2 - r22
    return out


def m1_equilibrium(params: MarketParams, sigma2: float | None = None) -> np.ndarray:
    s2 = _s2(params, sigma2)
    p = nash_price(params)
    firm = [p, 0.0, p, p * p + s2]
    return np.array(firm + firm)


def numerical_jacobian(f: Callable, x, rel_step: float = 1e-6) -> np.ndarray:
    """Central differences with step ``rel_step * (1 + |x_k|)``."""
    x = np.asarray(x, dtype=float)
    cols = []
    for k in range(x.size):
        h = rel_step * (1.0 + abs(x[k]))
        e = np.zeros_like(x)
        e[k] = h
        cols.append((np.asarray(f(x + e)) - np.asarray(f(x - e))) / (2 * h))
    return np.column_stack(cols)


def m1_alpha_jacobian(
    params: MarketParams, sigma2: float | None = None, scaled: bool = False
) -> np.ndarray:
    """Numerical 4x4 Jacobian of the belief drift at the equilibrium.

    ``scaled=False`` differentiates ``g`` itself; ``scaled=True`` differentiates
    ``R^-1 g`` with R frozen at its equilibrium value (the belief block of the
    full 8-dimensional system, since g vanishes there).
    """
    s2 = _s2(params, sigma2)
    eq = m1_equilibrium(params, s2)
    if not scaled:
        return numerical_jacobian(
            lambda th: m1_expected_update(th, params, s2), eq[[0, 1, 4, 5]]
        )

    def drift(th):
        x = eq.copy()
        x[[0, 1, 4, 5]] = th
        return vf_m1(x, params, s2)[[0, 1, 4, 5]]

    return numerical_jacobian(drift, eq[[0, 1, 4, 5]])


def m1_reference_jacobian(params: MarketParams, sigma2: float | None = None) -> np.ndarray:
    """Closed-form belief-block matrix as commonly stated for this model.

    It does not coincide with the derivative of ``m1_expected_update``; see
    ``m1_alpha_jacobian`` for the numerically differentiated version.
    """
    s2 = _s2(params, sigma2)
    p = nash_price(params)
    k = params.C / (2.0 * params.B)
    Ablk = np.array([[-1.0, -2 * p], [-p, -2 * p * p - s2]])
    Bblk = np.array([[k, 2 * p], [p * k, 2 * p * p]])
    return np.block([[Ablk, Bblk], [Bblk, Ablk]])


def m1_reference_eigenvalues(params: MarketParams, sigma2: float | None = None) -> np.ndarray:
    """Closed-form spectrum of ``m1_reference_jacobian``, sorted ascending."""
    s2 = _s2(params, sigma2)
    p = nash_price(params)
    k = params.C / (2.0 * params.B)
    tr = 1 + k + 4 * p * p + s2
    disc = np.sqrt(tr * tr - 4 * (1 + k) * s2)
    return np.sort(np.array([-1 + k, -s2, -0.5 * tr + 0.5 * disc, -0.5 * tr - 0.5 * disc]))


# --------------------------------------------------------------------------
# integration


@dataclass
class OdeTrajectory:
    t: np.ndarray
    x: np.ndarray
    dt: float
    method: str = "rk4"

    @property
    def final(self) -> np.ndarray:
        return self.x[-1]


def integrate(vf: Callable, state0, T: float, dt: float = 0.01) -> OdeTrajectory:
    """Classical fixed-step RK4 from ``t=0`` to ``T`` (last step shortened)."""
    if not (dt > 0 and T > 0):
        raise ValueError("need dt > 0 and T > 0")
    n = int(np.ceil(T / dt - 1e-9))
    ts = np.minimum(np.arange(n + 1) * dt, T)
    xs = np.empty((n + 1, np.size(state0)))
    x = np.asarray(state0, dtype=float).copy()
    xs[0] = x
    try:
        for k in range(n):
            h = ts[k + 1] - ts[k]
            k1 = vf(x)
            k2 = vf(x + 0.5 * h * k1)
            k3 = vf(x + 0.5 * h * k2)
            k4 = vf(x + h * k3)
            x = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            if not np.all(np.isfinite(x)):
                raise NonFinite(f"state became non-finite at t={ts[k + 1]:.4g}")
            xs[k + 1] = x
    except (DegenerateBelief, SingularR) as e:
        raise NonFinite(f"left the admissible region near t={ts[k]:.4g}: {e}") from e
    return OdeTrajectory(ts, xs, dt)


# --------------------------------------------------------------------------
# reduced slope dynamics near the Nash belief


def slope_price_gap(a, params: MarketParams):
    """Intended price above p^N implied by slope ``a`` when the fitted line
    passes through (p^N, p^N)."""
    p = nash_price(params)
    return params.C * a * p / (2.0 * (params.B - params.C * a))


def reduced_slope_vf(
    a11: float,
    a12: float,
    params: MarketParams,
    sigma2: float | None = None,
    pi_opp: tuple[float, float] = (1.0, 1.0),
    simplified: bool = False,
) -> np.ndarray:
    """Slope-only mean dynamics with intercepts pinned to the Nash price.

    Each slope relaxes toward the regression coefficient of the rival's price
    gap on its own, ``pi_j d_i d_j / (d_i^2 + sigma2)``. By default ``d`` is the
    exact price gap from ``slope_price_gap``; ``simplified=True`` linearizes it
    to ``C p^N a`` (no ``pi_opp`` weighting), which drops the ``2(B - C a)``
    denominator.
    """
    s2 = _s2(params, sigma2)
    a = np.array([a11, a12], dtype=float)
    if simplified:
        d = params.C * nash_price(params) * a
        w = np.ones(2)
    else:
        d = slope_price_gap(a, params)
        w = np.array([pi_opp[1], pi_opp[0]], dtype=float)
    cross = d[0] * d[1]
    return w * cross / (d * d + s2) - a


def self_reinforcing_thresholds(
    params: MarketParams, sigma2: float | None = None, pi_opp: float = 1.0
) -> tuple[float, float, float]:
    """Slope band ``(alpha_lo, alpha_hi)`` on the diagonal in which slopes grow,
    plus the off-diagonal reach ``beta_lo``.

    The band is the positive root pair of
    ``C^2 p^2 (pi - a) a - 4 s2 (B - C a)^2 = 0``.
    """
    s2 = _s2(params, sigma2)
    B, C = params.B, params.C
    p = nash_price(params)
    k = C * C * p * p
    # -(k + 4 s2 C^2) a^2 + (k pi + 8 s2 B C) a - 4 s2 B^2 = 0
    qa = k + 4 * s2 * C * C
    qb = k * pi_opp + 8 * s2 * B * C
    qc = 4 * s2 * B * B
    disc = qb * qb - 4 * qa * qc
    if disc < 0:
        raise NoRealRoots(f"no self-reinforcing band at sigma2={s2} (discriminant {disc:.3g})")
    root = np.sqrt(disc)
    # stable form for the small root
    a_hi = (qb + root) / (2 * qa)
    a_lo = qc / (qa * a_hi)
    inner = a_lo * k - s2
    beta_lo = np.sqrt(inner) / (C * p) if inner >= 0 else float("nan")
    return float(a_lo), float(a_hi), float(beta_lo)


def existence_bound_sigma2(params: MarketParams, pi_opp: float = 1.0) -> float:
    """Largest sigma2 for which ``self_reinforcing_thresholds`` has real roots."""
    p = nash_price(params)
    B, C = params.B, params.C
    k = C * C * p * p

    def disc(s2):
        qa = k + 4 * s2 * C * C
        qb = k * pi_opp + 8 * s2 * B * C
        return qb * qb - 16 * qa * s2 * B * B

    hi = 1.0
    while disc(hi) > 0:
        hi *= 2
    return float(bisect(disc, 0.0 + 1e-300, hi, xtol=1e-15))


# --------------------------------------------------------------------------
# stability along the ray toward collusive beliefs


def ray_length(params: MarketParams) -> float:
    """Per-firm distance from (p^N, 0) to (0, 1) in the belief plane."""
    return float(np.hypot(nash_price(params), 1.0))


def ray_point(r: float, params: MarketParams) -> tuple[float, float]:
    """Belief at distance ``r`` from (p^N, 0) along the segment to (0, 1)."""
    p = nash_price(params)
    s = r / ray_length(params)
    return p * (1.0 - s), s


def direction_along_ray(r: float, params: MarketParams, sigma2: float | None = None) -> float:
    """Inner product of the stacked displacement from the Nash belief with the
    expected belief update ``g`` at the symmetric ray point.

    ``g`` is used without the R^-1 scaling: scaling by the induced second
    moment matrix makes the projection negative along the entire ray.
    """
    if r < 0:
        raise ValueError("r must be >= 0")
    s2 = _s2(params, sigma2)
    p = nash_price(params)
    a0, a1 = ray_point(r, params)
    g = m1_expected_update([a0, a1, a0, a1], params, s2)
    disp = np.array([a0 - p, a1, a0 - p, a1])
    return float(disp @ g)


def stability_radius(
    params: MarketParams, sigma2: float | None = None, tol: float = 1e-8, grid: int = 4000
) -> float:
    """Smallest positive zero of ``direction_along_ray`` (bisection)."""
    s2 = _s2(params, sigma2)
    if s2 <= 0:
        raise ValueError("sigma2 must be positive")
    L = ray_length(params)
    rs = np.linspace(0, L * (1 - 1e-9), grid + 1)[1:]
    vals = np.array([direction_along_ray(r, params, s2) for r in rs])
    up = np.flatnonzero((vals[:-1] < 0) & (vals[1:] >= 0))
    if vals[0] >= 0:
        raise NoSignChange("direction is not negative next to the equilibrium")
    if up.size == 0:
        raise NoSignChange(f"direction stays negative along the ray at sigma2={s2}")
    k = up[0]
    f = lambda r: direction_along_ray(r, params, s2)
    return float(bisect(f, rs[k], rs[k + 1], xtol=tol))


def escape_boundary(params: MarketParams, sigma2: float | None = None, grid: int = 4000) -> float:
    """Upper zero of ``direction_along_ray``: where outward drift turns back."""
    s2 = _s2(params, sigma2)
    L = ray_length(params)
    rs = np.linspace(0, L * (1 - 1e-9), grid + 1)[1:]
    vals = np.array([direction_along_ray(r, params, s2) for r in rs])
    down = np.flatnonzero((vals[:-1] > 0) & (vals[1:] <= 0))
    if down.size == 0:
        raise NoSignChange("no outward region ends along the ray")
    k = down[-1]
    return float(bisect(lambda r: direction_along_ray(r, params, s2), rs[k], rs[k + 1], xtol=1e-10))
