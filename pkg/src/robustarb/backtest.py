"""Out-of-sample evaluation over non-overlapping trading windows.

A window spans n price increments (n + 1 prices); windows tile the test series
left to right and the trailing remainder shorter than n is discarded. Before
feeding the networks, each window is rescaled so its first prices equal the
training spot convention; profits for the strategy and for both baselines are
reported on that normalized scale throughout, so comparisons stay consistent.
The trained cash parameter is a super-replication diagnostic and is never added
to reported profits.

Ratio definitions (frozen here and used everywhere, per n-day window, zero
benchmark, no annualization):

    sharpe  = mean(profits) / sample std(profits)        (ddof = 1)
    sortino = mean(profits) / sqrt(mean(min(profit, 0)^2))
"""

from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .costs import CostSpec
from .market_data import (DEFAULT_TARGET_SPOT, AssetBounds, PathMatrix, PriceSeries,
                          build_paths, compute_bounds)
from .trainer import TrainConfig, config_for_seed, train
from . import strategy_net as sn

DEFAULT_BASELINE_UNITS = 10.0

METRIC_LABELS = (
    "Overall Profit",
    "Average Profit",
    "% of Profitable Trades",
    "Max. Profit",
    "Min. Profit",
    "Sharpe Ratio",
    "Sortino Ratio",
)

EQUITY_QUANTILES = (0.0, 0.25, 0.5, 0.75, 1.0)


@dataclass(frozen=True)
class WindowProfits:
    profits: np.ndarray          # (W,) net profit per window, normalized scale
    window_starts: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "profits", np.asarray(self.profits, dtype=float))
        object.__setattr__(self, "window_starts", tuple(self.window_starts))
        if self.profits.shape != (len(self.window_starts),):
            raise ValueError("one start date per window required")

    @property
    def n_windows(self) -> int:
        return self.profits.shape[0]

    def equity_curve(self) -> np.ndarray:
        return np.cumsum(self.profits)


@dataclass(frozen=True)
class Metrics:
    overall_profit: float
    average_profit: float
    pct_profitable: float
    max_profit: float
    min_profit: float
    sharpe: float
    sortino: float
    flags: tuple[str, ...] = ()

    def as_rows(self) -> dict:
        return {
            "Overall Profit": self.overall_profit,
            "Average Profit": self.average_profit,
            "% of Profitable Trades": self.pct_profitable,
            "Max. Profit": self.max_profit,
            "Min. Profit": self.min_profit,
            "Sharpe Ratio": self.sharpe,
            "Sortino Ratio": self.sortino,
        }


def window_count(n_prices: int, n: int) -> int:
    return (n_prices - 1) // n


def _window_slices(series: PriceSeries, n: int):
    w = window_count(series.n_dates, n)
    if w < 1:
        raise ValueError(f"test series shorter than one window of {n} steps")
    for k in range(w):
        yield series.dates[k * n], series.prices[k * n: k * n + n + 1]


def _normalized_window(block: np.ndarray, spot_norm: float):
    """Rescale a (n+1, d) price block so the first row equals spot_norm."""
    scale = spot_norm / block[0]
    prices = block * scale
    spot = np.full(block.shape[1], spot_norm)
    return prices, spot


def _window_profit(pos: np.ndarray, prices: np.ndarray, costs: CostSpec) -> float:
    """Net profit of positions (n, d) over window prices (n+1, d)."""
    return float(sn.trading_profits(costs, pos[None], prices[None])[0])


def evaluate(net: sn.StrategyNetwork, test: PriceSeries,
             spot_norm: float = DEFAULT_TARGET_SPOT, costs: CostSpec = CostSpec.zero(),
             n: int | None = None) -> WindowProfits:
    """Run the frozen strategy over consecutive non-overlapping n-step windows."""
    n = net.n if n is None else n
    if n != net.n:
        raise ValueError("window length must equal the strategy horizon")
    if test.n_assets != net.d:
        raise ValueError("asset count mismatch between strategy and test series")
    profits, starts = [], []
    for start, block in _window_slices(test, n):
        prices, spot = _normalized_window(block, spot_norm)
        pos = sn.positions(net, prices[1:])
        profits.append(_window_profit(pos, prices, costs))
        starts.append(start)
    return WindowProfits(np.array(profits), tuple(starts))


def buy_and_hold(test: PriceSeries, n: int, units: float = DEFAULT_BASELINE_UNITS,
                 costs: CostSpec = CostSpec.zero(),
                 spot_norm: float = DEFAULT_TARGET_SPOT) -> WindowProfits:
    """Hold `units` of every asset per window, opening at the window start and
    closing at the window end; both legs incur costs."""
    profits, starts = [], []
    for start, block in _window_slices(test, n):
        prices, _ = _normalized_window(block, spot_norm)
        pos = np.full((n, prices.shape[1]), units)
        profits.append(_window_profit(pos, prices, costs))
        starts.append(start)
    return WindowProfits(np.array(profits), tuple(starts))


def one_time_buy_and_hold(test: PriceSeries, n: int,
                          units: float = DEFAULT_BASELINE_UNITS,
                          costs: CostSpec = CostSpec.zero(),
                          spot_norm: float = DEFAULT_TARGET_SPOT) -> float:
    """Open once at the test start, close once at the end of the covered windows,
    report total profit divided by the window count."""
    w = window_count(test.n_dates, n)
    if w < 1:
        raise ValueError(f"test series shorter than one window of {n} steps")
    block = test.prices[: w * n + 1]
    prices, _ = _normalized_window(block, spot_norm)
    pos = np.full((w * n, prices.shape[1]), units)
    return _window_profit(pos, prices, costs) / w


def metrics(w: WindowProfits) -> Metrics:
    """Summary metrics under the frozen ratio definitions; requires >= 2 windows."""
    p = w.profits
    count = p.shape[0]
    if count < 2:
        raise ValueError("need at least 2 windows for the ratio denominators")
    mean = float(p.mean())
    flags = []
    std = float(p.std(ddof=1))
    if std == 0.0:
        sharpe = math.nan if mean == 0.0 else math.copysign(math.inf, mean)
        flags.append("zero_variance_sharpe")
    else:
        sharpe = mean / std
    downside = float(np.sqrt(np.mean(np.minimum(p, 0.0) ** 2)))
    if downside == 0.0:
        sortino = math.nan if mean == 0.0 else math.copysign(math.inf, mean)
        flags.append("zero_downside_sortino")
    else:
        sortino = mean / downside
    return Metrics(
        overall_profit=float(p.sum()),
        average_profit=mean,
        pct_profitable=100.0 * float((p > 0).sum()) / count,
        max_profit=float(p.max()),
        min_profit=float(p.min()),
        sharpe=sharpe,
        sortino=sortino,
        flags=tuple(flags),
    )


def mean_metrics(per_seed: list[Metrics]) -> Metrics:
    """Fieldwise average across replicas (flags unioned)."""
    flags = tuple(sorted({f for m in per_seed for f in m.flags}))
    agg = {
        name: float(np.mean([getattr(m, name) for m in per_seed]))
        for name in ("overall_profit", "average_profit", "pct_profitable",
                     "max_profit", "min_profit", "sharpe", "sortino")
    }
    return Metrics(flags=flags, **agg)


@dataclass(frozen=True)
class SuiteResult:
    per_seed_metrics: tuple
    mean: Metrics
    quantile_curves: dict          # quantile -> cumulative profits (W,)
    window_starts: tuple[str, ...]
    checkpoint_hashes: tuple[str, ...]
    baseline: Metrics | None = None
    one_time_baseline: float | None = None


def _checkpoint_hash(net: sn.StrategyNetwork) -> str:
    blob = json.dumps(sn.to_payload(net), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def quantile_rank_curves(curves: np.ndarray, quantiles=EQUITY_QUANTILES) -> dict:
    """Pick actual experiment curves at quantile ranks of the final cumulative
    profit (nearest rank, no interpolation)."""
    order = np.argsort(curves[:, -1], kind="stable")
    n = curves.shape[0]
    return {q: curves[order[round(q * (n - 1))]].copy() for q in quantiles}


def _limit_blas_threads():
    # replicas are process-parallel; per-worker BLAS threading oversubscribes
    try:
        import threadpoolctl
        threadpoolctl.threadpool_limits(limits=1)
    except ImportError:
        pass


def _run_replica(args):
    (train_paths, train_spot, bounds_lo, bounds_hi, bounds_delta,
     cfg, costs, test, spot_norm, single_thread) = args
    if single_thread:
        _limit_blas_threads()
    data = PathMatrix(train_paths, train_spot)
    bounds = AssetBounds(bounds_lo, bounds_hi, bounds_delta)
    net, _ = train(data, bounds, cfg, costs)
    profits = evaluate(net, test, spot_norm, costs)
    return metrics(profits), profits.equity_curve(), _checkpoint_hash(net), \
        profits.window_starts


def experiment_suite(train_series: PriceSeries, test_series: PriceSeries,
                     cfg: TrainConfig, costs: CostSpec, n: int,
                     n_seeds: int = 50, spot_norm: float = DEFAULT_TARGET_SPOT,
                     delta: float | None = None,
                     units: float = DEFAULT_BASELINE_UNITS,
                     include_baselines: bool = True,
                     workers: int = 1) -> SuiteResult:
    """Train n_seeds independent replicas (seeds cfg.seed + 0..n_seeds-1),
    evaluate each on the test series, and aggregate: fieldwise metric means plus
    cumulative-profit curves at quantile ranks of the final value."""
    if n_seeds < 1:
        raise ValueError("n_seeds must be at least 1")
    d = train_series.n_assets
    spot = np.full(d, spot_norm)
    data = build_paths(train_series, spot, n)
    delta = cfg.resolved_epsilon(d) if delta is None else delta
    bounds = compute_bounds(data, delta)
    parallel = workers > 1 and n_seeds > 1
    jobs = [
        (data.paths, data.spot, bounds.lower, bounds.upper, bounds.delta,
         config_for_seed(cfg, cfg.seed + r), costs, test_series, spot_norm,
         parallel)
        for r in range(n_seeds)
    ]
    if parallel:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_replica, jobs))
    else:
        results = [_run_replica(job) for job in jobs]
    per_seed = tuple(r[0] for r in results)
    curves = np.stack([r[1] for r in results])
    hashes = tuple(r[2] for r in results)
    starts = results[0][3]
    baseline = one_time = None
    if include_baselines:
        baseline = metrics(buy_and_hold(test_series, n, units, costs, spot_norm))
        one_time = one_time_buy_and_hold(test_series, n, units, costs, spot_norm)
    return SuiteResult(per_seed, mean_metrics(list(per_seed)),
                       quantile_rank_curves(curves), starts, hashes,
                       baseline, one_time)
