"""Penalized conditional-super-replication objective.

For each measure in the ambiguity set, every path is assigned to the cell of
its terminal value; the per-cell mean of (payoff - strategy value) replaces the
conditional expectation (empty cells contribute 0, i.e. 0/0 := 0). The loss is

    c + k * sum over measures of mean over paths of beta(cell mean at own cell)

which collapses the double sum over cells to one accumulation pass per measure:
with M paths, each cell's term beta(cell mean) appears once per member path, so
the measure total is sum over occupied cells of (count/M) * beta(cell mean).
The loss is exactly c when the strategy dominates the payoff in every cell mean
(beta vanishes on the nonpositive half-line).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .costs import CostSpec
from .measures import ScenarioSet
from .partition import BoxPartition, cell_indices
from . import strategy_net as sn


@dataclass(frozen=True)
class PenaltyFn:
    """beta(x) = lam * max(0, x)**power: zero for x <= 0, positive and increasing
    for x > 0, convex for power >= 1. Default lam=1, power=2."""

    lam: float = 1.0
    power: float = 2.0

    def __post_init__(self):
        if self.lam <= 0 or self.power <= 0:
            raise ValueError("lam and power must be positive")

    def value(self, x: np.ndarray) -> np.ndarray:
        return self.lam * np.maximum(x, 0.0) ** self.power

    def grad(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.power == 1.0:
            return self.lam * (x > 0.0).astype(float)
        return self.lam * self.power * np.maximum(x, 0.0) ** (self.power - 1.0)


@dataclass
class ObjectiveConfig:
    """k: penalization weight (k = 0 reduces the loss to the cash term alone);
    partition: the cell structure conditioning the expectations; spot: the
    unperturbed anchor prices shared by every measure; phi: optional bounded
    path payoff (paths (M, n, d) -> values (M,)), default 0."""

    k: float
    partition: BoxPartition
    spot: np.ndarray
    penalty: PenaltyFn = field(default_factory=PenaltyFn)
    phi: object = None

    def __post_init__(self):
        if self.k < 0:
            raise ValueError("k must be nonnegative")
        self.spot = np.asarray(self.spot, dtype=float)


def conditional_cell_means(values: np.ndarray, cell_ids: np.ndarray,
                           n_cells: int) -> np.ndarray:
    """Mean of values over the paths in each cell; empty cells yield 0 (0/0 := 0).

    Dense output of length n_cells; intended for small cell counts and tests.
    The training path uses the sparse equivalent over occupied cells only.
    """
    values = np.asarray(values, dtype=float)
    cell_ids = np.asarray(cell_ids)
    if np.any(cell_ids < 0) or np.any(cell_ids >= n_cells):
        raise ValueError("cell ids out of range")
    counts = np.bincount(cell_ids, minlength=n_cells).astype(float)
    sums = np.bincount(cell_ids, weights=values, minlength=n_cells)
    out = np.zeros(n_cells)
    occupied = counts > 0
    out[occupied] = sums[occupied] / counts[occupied]
    return out


def _phi_values(cfg: ObjectiveConfig, paths: np.ndarray, B: float) -> np.ndarray:
    if cfg.phi is None:
        return np.zeros(paths.shape[0])
    vals = np.asarray(cfg.phi(paths), dtype=float)
    if vals.shape != (paths.shape[0],):
        raise ValueError("phi must map the path batch to one value per path")
    if np.any(np.abs(vals) > B):
        raise ValueError("phi exceeds the budget bound B in absolute value")
    return vals


def _measure_penalty(v: np.ndarray, codes: np.ndarray, penalty: PenaltyFn):
    """Sparse per-measure penalty: mean over paths of beta(own-cell mean of v).

    Returns (penalty value, d(penalty)/d(v)) for the measure.
    """
    m = v.shape[0]
    _, inverse, counts = np.unique(codes, return_inverse=True, return_counts=True)
    sums = np.bincount(inverse, weights=v)
    means = sums / counts
    value = float((counts / m) @ penalty.value(means))
    dv = penalty.grad(means)[inverse] / m
    return value, dv


def penalized_loss_and_grad(net: sn.StrategyNetwork, ambiguity: list[ScenarioSet],
                            cfg: ObjectiveConfig, costs: CostSpec,
                            train_mode: bool = True, update_norm: bool = False):
    """Loss, exact parameter gradient, and the total penalty term.

    Measures are processed and accumulated in list order so repeated runs are
    bit-reproducible. update_norm folds each measure's batch statistics into the
    running standardization state (training only).
    """
    m_paths = {s.n_paths for s in ambiguity}
    if len(m_paths) != 1:
        raise ValueError("all scenario sets must share the path count")
    m = m_paths.pop()
    n_measures = len(ambiguity)
    # One fused pass over the concatenated measures: standardization statistics
    # stay per measure (slab groups), the affine stacks run once per subnet, and
    # the cross-measure gradient sum happens inside one deterministic reduction.
    all_paths = (ambiguity[0].paths if n_measures == 1
                 else np.concatenate([s.paths for s in ambiguity], axis=0))
    pos, tapes = sn.positions_batch(net, all_paths, train_mode=train_mode,
                                    update_norm=update_norm, groups=n_measures)
    prices_full = sn.stack_prices(all_paths, cfg.spot)
    h = net.c + sn.trading_profits(costs, pos, prices_full)
    v = _phi_values(cfg, all_paths, net.B) - h
    codes = cell_indices(cfg.partition, all_paths[:, -1, :])
    loss = net.c
    penalty_total = 0.0
    dh = np.zeros_like(v)
    for g in range(n_measures):
        sl = slice(g * m, (g + 1) * m)
        value, dv = _measure_penalty(v[sl], codes[sl], cfg.penalty)
        penalty_total += cfg.k * value
        loss += cfg.k * value
        dh[sl] = -cfg.k * dv                      # d(loss)/d(h_l)
    grad = sn.zero_bundle(net)
    dc = 1.0
    if cfg.k != 0.0:
        dc += float(dh.sum())
        dpos = dh[:, None, None] * sn.trading_profit_grad(costs, pos, prices_full)
        ddelta0, net_grads = sn.positions_backward(net, tapes, dpos)
        sn.accumulate_bundle(grad, 0.0, ddelta0, net_grads)
    grad.c = dc
    return float(loss), grad, float(penalty_total)


def penalized_loss(net: sn.StrategyNetwork, ambiguity: list[ScenarioSet],
                   cfg: ObjectiveConfig, costs: CostSpec,
                   train_mode: bool = True) -> float:
    """Loss value only; pure (never touches running statistics)."""
    loss, _, _ = penalized_loss_and_grad(net, ambiguity, cfg, costs,
                                         train_mode=train_mode, update_norm=False)
    return loss


def estimate_gamma(trained: sn.StrategyNetwork) -> float:
    """The trained cash parameter: the penalized conditional super-replication
    price estimate. Strictly negative with near-zero residual penalty certifies
    a robust statistical arbitrage; read the residual penalty off the training
    log."""
    return float(trained.c)
