"""Recursive pricing algorithm with model averaging.

Each firm carries two models of its rival: a constant price (``M0``) and a
linear reaction function fitted by recursive least squares (``M1``). It prices
at a weighted mix of the two best responses plus an exploration shock, then
updates both models, the running forecast profits of each, and the weight on
``M1``.

The per-period arithmetic lives in numba kernels so that the Python-facing
``step`` and the compiled ``simulate`` loop share one implementation.

Per-firm state vectors use the column layout in ``STATE_FIELDS``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Literal

import numpy as np
from numba import njit

from . import rng
from .errors import SingularR
from .market import BeliefVector, MarketParams, best_response, nash_price, nash_profit

STATE_FIELDS = ("pi", "alpha0", "a10", "a11", "r11", "r12", "r22", "pibar0", "pibar1")
PI, A0, A10, A11, R11, R12, R22, PB0, PB1 = range(9)

# record columns written by the step kernel
REC_FIELDS = ("b", "p", "b0", "b1", "Pi0", "Pi1", "profit")

DET_EPS = 1e-10
RIDGE = 1e-8

Timing = Literal["lagged", "current"]


@dataclass(frozen=True)
class GainSchedule:
    """Step sizes: constant ``lam``, or decreasing ``1/(t + offset)``."""

    kind: Literal["constant", "decreasing"] = "constant"
    lam: float = 0.01
    offset: float = 0.0

    def __post_init__(self):
        if self.kind not in ("constant", "decreasing"):
            raise ValueError(f"unknown gain kind {self.kind!r}")
        if self.kind == "constant" and not 0 < self.lam <= 1:
            raise ValueError(f"constant gain must be in (0, 1], got {self.lam}")
        if self.offset < 0:
            raise ValueError("offset must be >= 0")

    @classmethod
    def constant(cls, lam: float) -> "GainSchedule":
        return cls("constant", lam)

    @classmethod
    def decreasing(cls, offset: float = 0.0) -> "GainSchedule":
        return cls("decreasing", 0.0, offset)

    def value(self, t: int) -> float:
        if self.kind == "constant":
            return self.lam
        return 1.0 / (t + self.offset)

    def values(self, start: int, count: int) -> np.ndarray:
        if self.kind == "constant":
            return np.full(count, self.lam)
        return 1.0 / (np.arange(start, start + count, dtype=np.float64) + self.offset)


@dataclass
class FirmState:
    """One firm's algorithm state at the start of a period."""

    pi: float
    alpha0: float
    alpha1: BeliefVector
    R: np.ndarray
    pibar0: float
    pibar1: float

    def to_array(self) -> np.ndarray:
        R = np.asarray(self.R, dtype=float)
        return np.array(
            [
                self.pi,
                self.alpha0,
                self.alpha1.alpha0,
                self.alpha1.alpha1,
                R[0, 0],
                R[0, 1],
                R[1, 1],
                self.pibar0,
                self.pibar1,
            ]
        )

    @classmethod
    def from_array(cls, x) -> "FirmState":
        x = [float(v) for v in x]
        R = np.array([[x[R11], x[R12]], [x[R12], x[R22]]])
        return cls(x[PI], x[A0], BeliefVector(x[A10], x[A11]), R, x[PB0], x[PB1])


def equilibrium_R(params: MarketParams) -> np.ndarray:
    """Limit of the regressor second-moment matrix at the Nash belief."""
    p = nash_price(params)
    return np.array([[1.0, p], [p, p * p + params.sigma2]])


def sce_nash_state(params: MarketParams, pi: float = 0.5) -> FirmState:
    """Firm state sitting at the Nash self-confirming equilibrium."""
    p = nash_price(params)
    pin = nash_profit(params)
    return FirmState(pi, p, BeliefVector(p, 0.0), equilibrium_R(params), pin, pin)


# --------------------------------------------------------------------------
# scalar kernels


@njit(cache=True)
def _br(A, B, C, a0, a1):
    return (A + C * a0) / (2.0 * (B - C * a1))


@njit(cache=True)
def _rls(a0, a1, r11, r12, r22, x, y, lam, current):
    """One RLS step; returns (a0, a1, r11, r12, r22, ok)."""
    err = y - a0 - a1 * x
    if current:
        r11 = r11 + lam * (1.0 - r11)
        r12 = r12 + lam * (x - r12)
        r22 = r22 + lam * (x * x - r22)
    q11, q22 = r11, r22
    det = q11 * q22 - r12 * r12
    if abs(det) < DET_EPS:
        q11 += RIDGE
        q22 += RIDGE
        det = q11 * q22 - r12 * r12
    if not np.isfinite(det) or abs(det) < 1e-300:
        return a0, a1, r11, r12, r22, False
    # R^{-1} [1, x]' err
    g0 = (q22 - r12 * x) / det
    g1 = (q11 * x - r12) / det
    a0n = a0 + lam * g0 * err
    a1n = a1 + lam * g1 * err
    if not current:
        r11 = r11 + lam * (1.0 - r11)
        r12 = r12 + lam * (x - r12)
        r22 = r22 + lam * (x * x - r22)
    return a0n, a1n, r11, r12, r22, True


@njit(cache=True)
def _step_kernel(
    s, A, B, C, lam, e1, e2, cap_lo, cap_hi, pi_lo, pi_hi, forced1, forced2, current, rec
):
    """Advance both firms one period in place.

    ``s`` is (2, 9); ``forcedk`` is -1 for model averaging, else the fixed
    model index 0/1. ``rec`` is (7, 2) and receives the ``REC_FIELDS`` rows.
    Returns False if a second-moment matrix could not be inverted.
    """
    eps = (e1, e2)
    forced = (forced1, forced2)
    for i in range(2):
        b0 = _br(A, B, C, s[i, A0], 0.0)
        b1 = _br(A, B, C, s[i, A10], s[i, A11])
        if forced[i] == 0:
            w = 0.0
        elif forced[i] == 1:
            w = 1.0
        else:
            w = s[i, PI]
        rec[2, i] = b0
        rec[3, i] = b1
        rec[0, i] = (1.0 - w) * b0 + w * b1
        rec[1, i] = rec[0, i] + eps[i]
    for i in range(2):
        j = 1 - i
        p_opp = rec[1, j]
        rec[6, i] = rec[1, i] * (A - B * rec[1, i] + C * p_opp)
        s[i, A0] = s[i, A0] + lam * (p_opp - s[i, A0])
        x = rec[3, i] + eps[i]
        a0n, a1n, r11, r12, r22, ok = _rls(
            s[i, A10], s[i, A11], s[i, R11], s[i, R12], s[i, R22], x, p_opp, lam, current
        )
        if not ok:
            return False
        s[i, A10] = a0n
        s[i, A11] = min(max(a1n, cap_lo), cap_hi)
        s[i, R11] = r11
        s[i, R12] = r12
        s[i, R22] = r22
        q0 = rec[2, i] + eps[i]
        q1 = x
        pi0 = q0 * (A - B * q0 + C * p_opp)
        pi1 = q1 * (A - B * q1 + C * p_opp)
        rec[4, i] = pi0
        rec[5, i] = pi1
        s[i, PB0] = s[i, PB0] + lam * (pi0 - s[i, PB0])
        s[i, PB1] = s[i, PB1] + lam * (pi1 - s[i, PB1])
        if forced[i] < 0:
            ind = 1.0 if s[i, PB1] > s[i, PB0] else 0.0
            pi = s[i, PI] + lam * (ind - s[i, PI])
            s[i, PI] = min(max(pi, pi_lo), pi_hi)
    return True


@njit(cache=True)
def _simulate_kernel(
    s, shocks, gains, A, B, C, cap_lo, cap_hi, pi_lo, pi_hi, forced1, forced2, current,
    states_out, rec_out,
):
    """Run ``len(gains)`` periods; returns -1 on success or the failing index."""
    rec = np.empty((7, 2))
    for t in range(gains.shape[0]):
        ok = _step_kernel(
            s, A, B, C, gains[t], shocks[t, 0], shocks[t, 1], cap_lo, cap_hi,
            pi_lo, pi_hi, forced1, forced2, current, rec,
        )
        if not ok:
            return t
        states_out[t] = s
        rec_out[t] = rec
    return -1


@njit(cache=True)
def _first_exit_kernel(s, shocks, lam, A, B, C, cap_lo, cap_hi, ref, rho2, current):
    """Forced-M1 run; index of the first period whose slope/intercept block is
    farther than sqrt(rho2) from ``ref`` (a length-4 vector), or -1.

    Returns -2 - t if the second-moment matrix fails at period t.
    """
    rec = np.empty((7, 2))
    for t in range(shocks.shape[0]):
        ok = _step_kernel(
            s, A, B, C, lam, shocks[t, 0], shocks[t, 1], cap_lo, cap_hi,
            0.0, 1.0, 1, 1, current, rec,
        )
        if not ok:
            return -2 - t
        d = (
            (s[0, A10] - ref[0]) ** 2
            + (s[0, A11] - ref[1]) ** 2
            + (s[1, A10] - ref[2]) ** 2
            + (s[1, A11] - ref[3]) ** 2
        )
        if d > rho2:
            return t
    return -1


# --------------------------------------------------------------------------
# per-operation API


def intended_price(state: FirmState, params: MarketParams) -> float:
    """Model-weighted mix of the two best responses."""
    b0 = best_response(params, BeliefVector(state.alpha0, 0.0))
    b1 = best_response(params, state.alpha1)
    return (1.0 - state.pi) * b0 + state.pi * b1


def update_m0(alpha0: float, p_opponent: float, lam: float) -> float:
    return alpha0 + lam * (p_opponent - alpha0)


def update_m1(
    alpha1: BeliefVector,
    R,
    regressor_price: float,
    p_opponent: float,
    lam: float,
    timing: Timing = "lagged",
) -> tuple[BeliefVector, np.ndarray]:
    """Recursive least-squares update of the perceived reaction function.

    ``timing="lagged"`` scales the coefficient step by the previous period's
    moment matrix (the form used throughout the simulator).
    ``timing="current"`` updates the moment matrix first; with gain ``1/t``
    this reproduces batch OLS exactly.
    """
    R = np.asarray(R, dtype=float)
    a0, a1, r11, r12, r22, ok = _rls(
        alpha1.alpha0, alpha1.alpha1, R[0, 0], R[0, 1], R[1, 1],
        float(regressor_price), float(p_opponent), float(lam), timing == "current",
    )
    if not ok:
        raise SingularR("second-moment matrix is singular after regularization")
    return BeliefVector(a0, a1), np.array([[r11, r12], [r12, r22]])


def counterfactual_profits(
    params: MarketParams, b0: float, b1: float, eps_own: float, p_opponent: float
) -> tuple[float, float]:
    """Profits each model's recommendation would have earned this period."""
    out = []
    for b in (b0, b1):
        q = b + eps_own
        out.append(q * (params.A - params.B * q + params.C * p_opponent))
    return out[0], out[1]


def update_weights(
    state: FirmState,
    Pi0: float,
    Pi1: float,
    lam: float,
    pi_lo: float = 0.01,
    pi_hi: float = 0.99,
) -> FirmState:
    """Update the average forecast profits, then the weight on ``M1``.

    The indicator compares the freshly updated averages and is strict, so a
    tie counts against ``M1``.
    """
    pb0 = state.pibar0 + lam * (Pi0 - state.pibar0)
    pb1 = state.pibar1 + lam * (Pi1 - state.pibar1)
    ind = 1.0 if pb1 > pb0 else 0.0
    pi = min(max(state.pi + lam * (ind - state.pi), pi_lo), pi_hi)
    return replace(state, pi=pi, pibar0=pb0, pibar1=pb1)


@dataclass(frozen=True)
class StepConfig:
    """Clamps and switches shared by ``step`` and ``simulate``."""

    pi_lo: float = 0.01
    pi_hi: float = 0.99
    slope_floor: float = -2.0
    slope_margin: float = 0.05
    forced: tuple[int | None, int | None] = (None, None)
    timing: Timing = "lagged"

    def __post_init__(self):
        if not 0 < self.pi_lo <= self.pi_hi < 1:
            raise ValueError(f"need 0 < pi_lo <= pi_hi < 1, got {self.pi_lo}, {self.pi_hi}")
        for k in self.forced:
            if k not in (None, 0, 1):
                raise ValueError(f"forced model must be None, 0 or 1, got {k!r}")
        if self.timing not in ("lagged", "current"):
            raise ValueError(f"unknown timing {self.timing!r}")

    def slope_cap(self, params: MarketParams) -> float:
        return params.slope_cap - self.slope_margin

    def kernel_args(self, params: MarketParams) -> tuple:
        f1, f2 = (-1 if k is None else k for k in self.forced)
        return (
            params.A, params.B, params.C,
            self.slope_floor, min(self.slope_cap(params), 1e300),
            self.pi_lo, self.pi_hi, f1, f2, self.timing == "current",
        )


@dataclass
class PeriodRecord:
    b: tuple[float, float]
    p: tuple[float, float]
    b0: tuple[float, float]
    b1: tuple[float, float]
    Pi0: tuple[float, float]
    Pi1: tuple[float, float]
    profit: tuple[float, float]


def step(
    states: tuple[FirmState, FirmState],
    params: MarketParams,
    lam: float,
    shocks: tuple[float, float],
    cfg: StepConfig = StepConfig(),
) -> tuple[tuple[FirmState, FirmState], PeriodRecord]:
    """One period: price, observe, update beliefs, forecast profits, weights."""
    s = np.stack([states[0].to_array(), states[1].to_array()])
    rec = np.empty((7, 2))
    A, B, C, lo, hi, pl, ph, f1, f2, cur = cfg.kernel_args(params)
    ok = _step_kernel(
        s, A, B, C, float(lam), float(shocks[0]), float(shocks[1]),
        lo, hi, pl, ph, f1, f2, cur, rec,
    )
    if not ok:
        raise SingularR("second-moment matrix is singular after regularization")
    new = (FirmState.from_array(s[0]), FirmState.from_array(s[1]))
    return new, PeriodRecord(*(tuple(float(v) for v in row) for row in rec))


# --------------------------------------------------------------------------
# full runs


@dataclass(frozen=True)
class SimConfig:
    params: MarketParams = field(default_factory=MarketParams)
    gain: GainSchedule = field(default_factory=lambda: GainSchedule.constant(0.01))
    horizon: int = 10_000
    seed: int = 0
    step: StepConfig = field(default_factory=StepConfig)
    init: tuple[FirmState, FirmState] | None = None
    pi0: float = 0.5

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")

    def initial_states(self) -> tuple[FirmState, FirmState]:
        if self.init is not None:
            return self.init
        st = sce_nash_state(self.params, self.pi0)
        return st, replace(st, R=st.R.copy())


@dataclass
class SimTrajectory:
    """Per-period arrays; index ``t`` holds period ``t+1``.

    ``states[t]`` is the (2, 9) post-update state (columns ``STATE_FIELDS``);
    ``b``, ``p``, ``eps``, ``Pi0``, ``Pi1``, ``profit`` are (T, 2).
    """

    params: MarketParams
    b: np.ndarray
    p: np.ndarray
    eps: np.ndarray
    b0: np.ndarray
    b1: np.ndarray
    Pi0: np.ndarray
    Pi1: np.ndarray
    profit: np.ndarray
    states: np.ndarray

    def __len__(self):
        return self.p.shape[0]

    def column(self, name: str) -> np.ndarray:
        return self.states[:, :, STATE_FIELDS.index(name)]

    @property
    def pi(self):
        return self.column("pi")

    @property
    def alpha0(self):
        return self.column("alpha0")

    @property
    def slope(self):
        return self.column("a11")

    @property
    def intercept(self):
        return self.column("a10")


def simulate(config: SimConfig) -> SimTrajectory:
    """Full trajectory for one seed; bit-identical for identical inputs."""
    params = config.params
    T = config.horizon
    shocks = rng.shock_block(config.seed, 1, T, params.sigma)
    gains = config.gain.values(1, T)
    s0 = np.stack([x.to_array() for x in config.initial_states()])
    states = np.empty((T, 2, 9))
    recs = np.empty((T, 7, 2))
    bad = _simulate_kernel(
        s0, shocks, gains, *config.step.kernel_args(params), states, recs
    )
    if bad >= 0:
        raise SingularR("second-moment matrix is singular after regularization", bad + 1)
    rows = {name: recs[:, k, :] for k, name in enumerate(REC_FIELDS)}
    return SimTrajectory(params=params, eps=shocks, states=states, **rows)


def first_exit_period(
    params: MarketParams,
    lam: float,
    rho: float,
    seed: int,
    max_periods: int = 5_000_000,
    chunk: int = 65_536,
    cfg: StepConfig = StepConfig(forced=(1, 1)),
) -> tuple[int | None, np.ndarray | None]:
    """First period at which a forced-M1 run started at the Nash equilibrium
    leaves the ball of radius ``rho`` around the stacked Nash beliefs.

    Returns ``(period, exit_alpha)``, or ``(None, None)`` if no exit occurs
    within ``max_periods``.
    """
    p = nash_price(params)
    st = sce_nash_state(params, 1.0)
    s = np.stack([st.to_array(), st.to_array()])
    ref = np.array([p, 0.0, p, 0.0])
    A, B, C, lo, hi, _, _, _, _, cur = cfg.kernel_args(params)
    start = 1
    while start <= max_periods:
        n = min(chunk, max_periods - start + 1)
        shocks = rng.shock_block(seed, start, n, params.sigma)
        k = _first_exit_kernel(s, shocks, lam, A, B, C, lo, hi, ref, rho * rho, cur)
        if k <= -2:
            raise SingularR("second-moment matrix is singular", start + (-2 - k))
        if k >= 0:
            exit_alpha = np.array([s[0, A10], s[0, A11], s[1, A10], s[1, A11]])
            return start + k, exit_alpha
        start += n
    return None, None


# --------------------------------------------------------------------------
# derived experiments


@dataclass(frozen=True)
class Episode:
    start: int
    peak: int
    end: int
    closed: bool = True


def detect_episodes(
    traj: SimTrajectory, hi_frac: float = 0.5, lo_frac: float = 0.25
) -> list[Episode]:
    """High-price episodes in the intended-price series, with hysteresis.

    An episode opens when both intended prices exceed
    ``pN + hi_frac*(pC - pN)`` and closes once both are below
    ``pN + lo_frac*(pC - pN)``. An episode still open at the end of the
    sample is returned with ``closed=False``.
    """
    if not 0 < lo_frac < hi_frac < 1:
        raise ValueError("need 0 < lo_frac < hi_frac < 1")
    from .market import cartel_price

    pN, pC = nash_price(traj.params), cartel_price(traj.params)
    hi = pN + hi_frac * (pC - pN)
    lo = pN + lo_frac * (pC - pN)
    b = np.asarray(traj.b)
    up = np.all(b > hi, axis=1)
    down = np.all(b < lo, axis=1)
    level = b.mean(axis=1)
    out = []
    t, T = 0, len(b)
    while t < T:
        if up[t]:
            start = t
            closes = np.flatnonzero(down[t:])
            end = t + closes[0] if closes.size else T - 1
            peak = start + int(np.argmax(level[start : end + 1]))
            out.append(Episode(start, peak, int(end), bool(closes.size)))
            t = end + 1
        else:
            t += 1
    return out


def payoff_matrix_experiment(
    params: MarketParams,
    gain: GainSchedule,
    horizon: int,
    seeds: list[int],
    burn_in: int = 0,
) -> dict:
    """Average realized profits with both firms locked into fixed models.

    Returns ``{"mean": (2, 2, 2), "se": (2, 2, 2), "per_seed": (S, 2, 2, 2)}``
    indexed ``[model of firm 1, model of firm 2, firm]``.
    """
    if not seeds:
        raise ValueError("need at least one seed")
    per_seed = np.empty((len(seeds), 2, 2, 2))
    for n, seed in enumerate(seeds):
        for k in (0, 1):
            for l in (0, 1):
                traj = simulate(
                    SimConfig(
                        params=params, gain=gain, horizon=horizon, seed=seed,
                        step=StepConfig(forced=(k, l)),
                    )
                )
                per_seed[n, k, l] = traj.profit[burn_in:].mean(axis=0)
    mean = per_seed.mean(axis=0)
    se = (
        per_seed.std(axis=0, ddof=1) / np.sqrt(len(seeds))
        if len(seeds) > 1
        else np.full_like(mean, np.nan)
    )
    return {"mean": mean, "se": se, "per_seed": per_seed}
