"""Static market algebra for the linear Bertrand duopoly.

Demand for firm i is ``q_i = A - B p_i + C p_j``. Firms are myopic: given a
perceived reaction ``p_j = alpha0 + alpha1 * p_i`` they pick the price that
maximizes one-period profit. The constant-price model is the special case
``alpha1 = 0``.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import DegenerateBelief


@dataclass(frozen=True)
class MarketParams:
    """Demand primitives and exploration-shock variance."""

    A: float = 1.0
    B: float = 1.0
    C: float = 0.7
    sigma2: float = 0.0025

    def __post_init__(self):
        if not (self.A > 0 and self.B > 0 and self.C >= 0):
            raise ValueError(f"need A, B > 0 and C >= 0, got {self}")
        if self.B - self.C <= 0:
            raise ValueError(f"need B - C > 0, got B={self.B}, C={self.C}")
        if self.sigma2 < 0:
            raise ValueError(f"sigma2 must be >= 0, got {self.sigma2}")

    @property
    def sigma(self) -> float:
        return self.sigma2**0.5

    @property
    def slope_cap(self) -> float:
        """Supremum of admissible slopes, B/C (infinite when C = 0)."""
        return self.B / self.C if self.C > 0 else float("inf")

    def with_sigma2(self, sigma2: float) -> "MarketParams":
        return MarketParams(self.A, self.B, self.C, sigma2)


@dataclass(frozen=True)
class BeliefVector:
    """Perceived reaction ``p_j = alpha0 + alpha1 * p_i``."""

    alpha0: float
    alpha1: float = 0.0


def demand(params: MarketParams, p_own: float, p_other: float) -> float:
    """Linear demand; negative quantities are deliberately not truncated."""
    return params.A - params.B * p_own + params.C * p_other


def profit(params: MarketParams, p_own: float, p_other: float) -> float:
    return p_own * demand(params, p_own, p_other)


def best_response(params: MarketParams, belief: BeliefVector) -> float:
    """Profit-maximizing price against a perceived linear reaction.

    Raises DegenerateBelief when ``B - C*alpha1 <= 0``: the perceived residual
    demand is then not downward sloping and the problem has no maximum.
    """
    denom = params.B - params.C * belief.alpha1
    if denom <= 0:
        raise DegenerateBelief(
            f"B - C*alpha1 = {denom:.3g} <= 0 at alpha1={belief.alpha1}"
        )
    return (params.A + params.C * belief.alpha0) / (2.0 * denom)


def nash_price(params: MarketParams) -> float:
    """Symmetric static Nash price A/(2B - C)."""
    return params.A / (2.0 * params.B - params.C)


def cartel_price(params: MarketParams) -> float:
    """Joint-profit-maximizing symmetric price A/(2(B - C))."""
    return params.A / (2.0 * (params.B - params.C))


def nash_profit(params: MarketParams) -> float:
    p = nash_price(params)
    return profit(params, p, p)


def cartel_profit(params: MarketParams) -> float:
    p = cartel_price(params)
    return profit(params, p, p)


def sce_residuals(
    params: MarketParams,
    beliefs: tuple[BeliefVector, BeliefVector],
    prices: tuple[float, float],
) -> tuple[float, float, float, float]:
    """Residuals of the four self-confirming equilibrium conditions.

    The first two are the forecast-correctness conditions (each firm's
    perceived reaction passes through the observed price pair), the last two
    are the optimality conditions (each price is a best response).
    """
    (b1, b2), (p1, p2) = beliefs, prices
    return (
        p2 - (b1.alpha0 + b1.alpha1 * p1),
        p1 - (b2.alpha0 + b2.alpha1 * p2),
        p1 - best_response(params, b1),
        p2 - best_response(params, b2),
    )


def sce_nash(params: MarketParams):
    """Self-confirming equilibrium with flat perceived reactions at p^N."""
    p = nash_price(params)
    belief = BeliefVector(p, 0.0)
    return (belief, belief), (p, p)


def sce_collusive(params: MarketParams):
    """Self-confirming equilibrium with unit-slope beliefs supporting p^C."""
    belief = BeliefVector(0.0, 1.0)
    p = best_response(params, belief)
    return (belief, belief), (p, p)
