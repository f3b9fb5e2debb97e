"""Trading cost functionals: transaction fees, bid-ask spread, short borrowing.

Adjusting a position from prev to new (x = new - prev) at price S costs

    trans:  lambda * |x|            (per-share mode)
            lambda * S * |x|        (proportional mode)
    spread: 0.5 * lambda_spread * |x|      (no price factor; currency units)
    short:  lambda_short * max(-new, 0) * S

The path total runs over steps i = 0..n with the convention that the position
before the first trade and after the forced close are both zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TRANS_MODES = ("none", "per_share", "proportional")

# Conservative daily cost levels used as defaults throughout.
DEFAULT_PER_SHARE_LAMBDA = 0.01
DEFAULT_PROPORTIONAL_LAMBDA = 0.0001
DEFAULT_SPREAD_LAMBDA = 0.0002
DEFAULT_SHORT_LAMBDA_DAILY = 0.1 / 252


@dataclass(frozen=True)
class CostSpec:
    trans_mode: str = "none"
    trans_lambda: float = 0.0
    spread_lambda: float = 0.0
    short_lambda_daily: float = 0.0

    def __post_init__(self):
        if self.trans_mode not in TRANS_MODES:
            raise ValueError(f"trans_mode must be one of {TRANS_MODES}")
        if min(self.trans_lambda, self.spread_lambda, self.short_lambda_daily) < 0:
            raise ValueError("cost rates must be nonnegative")

    @classmethod
    def zero(cls) -> "CostSpec":
        return cls()

    @classmethod
    def default_per_share(cls) -> "CostSpec":
        return cls("per_share", DEFAULT_PER_SHARE_LAMBDA,
                   DEFAULT_SPREAD_LAMBDA, DEFAULT_SHORT_LAMBDA_DAILY)

    @classmethod
    def default_proportional(cls) -> "CostSpec":
        return cls("proportional", DEFAULT_PROPORTIONAL_LAMBDA,
                   DEFAULT_SPREAD_LAMBDA, DEFAULT_SHORT_LAMBDA_DAILY)


def _trans_cost(spec: CostSpec, price, x):
    if spec.trans_mode == "per_share":
        return spec.trans_lambda * np.abs(x)
    if spec.trans_mode == "proportional":
        return spec.trans_lambda * price * np.abs(x)
    return np.zeros_like(np.asarray(x, dtype=float))


def step_cost(spec: CostSpec, price: float, prev_pos: float, new_pos: float) -> float:
    """Cost of adjusting one asset from prev_pos to new_pos at the given price."""
    if price <= 0:
        raise ValueError("price must be positive")
    x = new_pos - prev_pos
    trans = float(_trans_cost(spec, price, x))
    spread = 0.5 * spec.spread_lambda * abs(x)
    short = spec.short_lambda_daily * max(-new_pos, 0.0) * price
    return trans + spread + short


def total_costs(spec: CostSpec, positions: np.ndarray, prices: np.ndarray) -> float:
    """Total cost of a single path.

    positions: (n+1, d) rows hold the post-trade positions at steps 0..n; the
    last row must be zero (forced close). The pre-trade position at step 0 is
    zero by convention. prices: (n+1, d) with the spot in row 0.
    """
    positions = np.asarray(positions, dtype=float)
    prices = np.asarray(prices, dtype=float)
    if positions.shape != prices.shape or positions.ndim != 2:
        raise ValueError("positions and prices must share shape (n+1, d)")
    if not np.all(positions[-1] == 0.0):
        raise ValueError("last position row must be zero (forced close)")
    return float(total_costs_batch(spec, positions[None], prices[None])[0])


def total_costs_batch(spec: CostSpec, positions: np.ndarray, prices: np.ndarray) -> np.ndarray:
    """Vectorized total cost over a batch: inputs (M, n+1, d), output (M,)."""
    if not np.all(prices > 0):
        raise ValueError("prices must be positive")
    prev = np.zeros_like(positions)
    prev[:, 1:] = positions[:, :-1]
    x = positions - prev
    per_step = _trans_cost(spec, prices, x)
    per_step = per_step + 0.5 * spec.spread_lambda * np.abs(x)
    per_step = per_step + spec.short_lambda_daily * np.maximum(-positions, 0.0) * prices
    return per_step.sum(axis=(1, 2))


def cost_grad_batch(spec: CostSpec, positions: np.ndarray, prices: np.ndarray) -> np.ndarray:
    """d(total cost)/d(position) for the trainable rows 0..n-1.

    Inputs as in total_costs_batch; output (M, n, d). Subgradient conventions:
    sign(0) = 0 for the |x| kinks, 0 at the short-cost kink.
    """
    prev = np.zeros_like(positions)
    prev[:, 1:] = positions[:, :-1]
    sign_x = np.sign(positions - prev)
    if spec.trans_mode == "per_share":
        marginal = (spec.trans_lambda + 0.5 * spec.spread_lambda) * sign_x
    elif spec.trans_mode == "proportional":
        marginal = (spec.trans_lambda * prices + 0.5 * spec.spread_lambda) * sign_x
    else:
        marginal = 0.5 * spec.spread_lambda * sign_x
    short_term = -spec.short_lambda_daily * prices * (positions < 0.0)
    # Position i enters the trade at step i (+) and the trade at step i+1 (-).
    return marginal[:, :-1] - marginal[:, 1:] + short_term[:, :-1]
