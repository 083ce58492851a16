import json

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from duopoly_escapes import large_deviations as ld
from duopoly_escapes import mean_dynamics as md
from duopoly_escapes import rng
from duopoly_escapes.harness.config import ExperimentConfig
from duopoly_escapes.learning import update_weights, sce_nash_state
from duopoly_escapes.market import (
    BeliefVector,
    MarketParams,
    best_response,
    cartel_price,
    nash_price,
    sce_collusive,
    sce_nash,
    sce_residuals,
)

markets = st.builds(
    lambda A, B, frac: MarketParams(A, B, frac * B),
    st.floats(0.1, 10), st.floats(0.1, 10), st.floats(0.0, 0.95),
)


@given(markets)
def test_equilibria_properties(P):
    p = nash_price(P)
    assert abs(best_response(P, BeliefVector(p, 0.0)) - p) < 1e-12 * max(1, p)
    assert cartel_price(P) >= p - 1e-12
    for beliefs, prices in (sce_nash(P), sce_collusive(P)):
        assert max(abs(r) for r in sce_residuals(P, beliefs, prices)) < 1e-9 * max(1, prices[0])


@given(st.integers(0, 2**64 - 1), st.integers(0, 2**40), st.integers(0, 1))
def test_normals_depend_only_on_address(seed, period, firm):
    a = rng.standard_normals(seed, [period, period + 1], firm)
    assert a[1] == rng.standard_normals(seed, period + 1, firm)
    assert np.all(np.isfinite(a))


@given(st.floats(0.0, 1.0), st.floats(-1, 1), st.floats(-1, 1), st.floats(1e-4, 1.0))
def test_weight_stays_clamped(pi, d0, d1, lam):
    P = MarketParams()
    st_ = sce_nash_state(P, min(max(pi, 0.01), 0.99))
    new = update_weights(st_, 0.6 + d0, 0.6 + d1, lam)
    assert 0.01 <= new.pi <= 0.99


@settings(max_examples=30, deadline=None)
@given(
    st.lists(st.floats(-1, 1), min_size=8, max_size=8),
    st.floats(-0.05, 0.05),
    st.floats(0.0, 0.2),
)
def test_H_dominates_linear_tilt(direction, da, slope):
    P = MarketParams()
    th = md.m1_equilibrium(P, 0.0025)
    th[0] += da
    th[1] += slope
    beta = np.asarray(direction)
    V00, V01, V11 = ld.quadratic_decompose_m1(th, beta, P)
    ev = np.linalg.eigvalsh(V11)
    if ev.size and np.max(np.abs(ev)) > 0:
        beta = beta * min(1.0, 40.0 / np.max(np.abs(ev)))
    H = ld.H_m1(th, beta, P, 0.0025)
    mean = ld.H_beta_m1(th, np.zeros(8), P, 0.0025)
    assert H >= beta @ mean - 1e-12


@given(st.integers(0, 2**63), st.floats(1e-4, 1.0), st.integers(1, 10**6))
def test_config_roundtrip(seed, gain, horizon):
    cfg = ExperimentConfig.from_dict({"seed": seed, "simulate": {"gain": gain, "horizon": horizon}})
    assert ExperimentConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg
