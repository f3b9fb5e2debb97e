import math

import numpy as np
import pytest

from robustarb.backtest import (WindowProfits, buy_and_hold, evaluate,
                                experiment_suite, mean_metrics, metrics,
                                one_time_buy_and_hold, quantile_rank_curves,
                                window_count)
from robustarb.costs import CostSpec
from robustarb.market_data import PriceSeries
from robustarb.trainer import TrainConfig
from robustarb import strategy_net as sn


def series_from(prices: np.ndarray, tickers=("X",)) -> PriceSeries:
    prices = np.atleast_2d(np.asarray(prices, dtype=float))
    if prices.shape[0] == 1:
        prices = prices.T
    return PriceSeries(tuple(f"d{i:04d}" for i in range(prices.shape[0])),
                       prices, tickers)


def zero_net(rng, d=1, n=3):
    net = sn.init(rng, d, n, widths=(3, 3, 3))
    for sub in net.nets:
        sub.weights[3][:] = 0.0
        sub.biases[3][:] = 0.0
    return net


def test_window_arithmetic():
    # 21 prices = 20 increments; n = 9 -> 2 windows of 10 prices each
    assert window_count(21, 9) == 2
    assert window_count(10, 9) == 1
    assert window_count(9, 9) == 0


def test_evaluate_zero_strategy(rng):
    net = zero_net(rng)
    test = series_from(np.linspace(100, 120, 10))
    profits = evaluate(net, test, costs=CostSpec.default_per_share())
    assert profits.n_windows == 3
    assert np.all(profits.profits == 0.0)
    assert profits.window_starts == ("d0000", "d0003", "d0006")


def test_evaluate_constant_prices_zero_profit(rng):
    net = sn.init(rng, 1, 3, widths=(3, 3, 3))
    net.delta0[:] = 2.0
    test = series_from(np.full(10, 77.0))
    profits = evaluate(net, test, costs=CostSpec.zero())
    assert np.allclose(profits.profits, 0.0, atol=1e-12)


def test_evaluate_requires_full_window(rng):
    net = zero_net(rng, n=3)
    with pytest.raises(ValueError, match="shorter than one window"):
        evaluate(net, series_from(np.array([100.0, 101.0, 102.0])))


def test_evaluate_normalizes_each_window(rng):
    # a strategy that is always long 1 unit earns the normalized window move
    net = sn.init(rng, 1, 2, widths=(3, 3, 3))
    net.delta0[:] = 1.0
    for sub in net.nets:
        sub.weights[3][:] = 0.0
        sub.biases[3][:] = np.arctanh(1.0 / net.B)
    # windows share the boundary price: [50, 55, 60] then [60, 63, 66]
    test = series_from(np.array([50.0, 55.0, 60.0, 63.0, 66.0]))
    profits = evaluate(net, test, spot_norm=100.0, costs=CostSpec.zero())
    # window 1: 100 -> 110 -> 120; window 2: 100 -> 105 -> 110; both long 1 unit
    assert np.allclose(profits.profits, [20.0, 10.0], atol=1e-9)


def test_buy_and_hold_hand_example():
    spec = CostSpec("per_share", 0.01, 0.0002, 0.1 / 252)
    test = series_from(np.array([100.0, 102.0, 105.0]))
    profits = buy_and_hold(test, n=2, units=10.0, costs=spec)
    # gross 10 * 5; open+close per-share 0.01 * 20; spread 0.0001 * 20
    assert profits.profits[0] == pytest.approx(50 - 0.2 - 0.002, abs=1e-12)
    assert profits.profits[0] == pytest.approx(49.798, abs=1e-12)


def test_buy_and_hold_flat_and_declining():
    test = series_from(np.array([100.0, 100.0, 100.0]))
    assert buy_and_hold(test, 2, 10.0, CostSpec.zero()).profits[0] == 0.0
    spec = CostSpec("per_share", 0.01, 0.0, 0.0)
    declining = series_from(np.array([100.0, 98.0, 95.0]))
    got = buy_and_hold(declining, 2, 10.0, spec).profits[0]
    assert got == pytest.approx(-50.0 - 0.2, abs=1e-12)


def test_buy_and_hold_zero_cost_telescopes(rng):
    prices = rng.uniform(80, 120, size=16)
    test = series_from(prices)
    n, units = 3, 7.0
    profits = buy_and_hold(test, n, units, CostSpec.zero())
    w = window_count(16, n)
    for k in range(w):
        block = prices[k * n: k * n + n + 1]
        expect = units * (100.0 * block[-1] / block[0] - 100.0)
        assert profits.profits[k] == pytest.approx(expect, rel=1e-12)


def test_windows_tile_increments(rng):
    # disjoint consecutive windows share boundary prices only: raw-scale gross
    # of an always-long unit position telescopes to the covered span's move
    from robustarb.backtest import _window_slices
    prices = rng.uniform(80, 120, size=23)
    test = series_from(prices)
    n = 4
    total = 0.0
    for _, block in _window_slices(test, n):
        total += block[-1, 0] - block[0, 0]
    w = window_count(23, n)
    assert total == pytest.approx(prices[w * n] - prices[0], rel=1e-12)


def test_one_time_buy_and_hold_hand_example():
    test = series_from(np.array([100.0, 102.0, 105.0, 108.0, 110.0]))
    got = one_time_buy_and_hold(test, n=2, units=10.0, costs=CostSpec.zero())
    assert got == pytest.approx(50.0, abs=1e-12)     # total 100 over 2 windows


def test_one_time_buy_and_hold_flat_and_single_round_trip():
    flat = series_from(np.full(7, 60.0))
    assert one_time_buy_and_hold(flat, 3, 10.0, CostSpec.zero()) == 0.0
    spec = CostSpec("per_share", 0.01, 0.0, 0.0)
    got = one_time_buy_and_hold(flat, 3, 10.0, spec)
    assert got == pytest.approx(-0.01 * 20 / 2, abs=1e-12)  # one open+close, 2 windows


def test_metrics_hand_example():
    m = metrics(WindowProfits(np.array([1.0, -1.0, 2.0]), ("a", "b", "c")))
    assert m.overall_profit == pytest.approx(2.0)
    assert m.average_profit == pytest.approx(2.0 / 3.0)
    assert m.pct_profitable == pytest.approx(100.0 * 2 / 3)
    assert m.max_profit == 2.0 and m.min_profit == -1.0
    assert m.sharpe == pytest.approx(0.4364, abs=1e-4)
    assert m.sortino == pytest.approx(1.1547, abs=1e-4)


def test_metrics_degenerate_flags():
    m = metrics(WindowProfits(np.array([2.0, 2.0]), ("a", "b")))
    assert math.isinf(m.sharpe) and m.sharpe > 0
    assert "zero_variance_sharpe" in m.flags
    assert math.isinf(m.sortino) and m.sortino > 0   # no downside either
    neg = metrics(WindowProfits(np.array([-1.0, -3.0]), ("a", "b")))
    assert neg.pct_profitable == 0.0 and neg.sortino < 0


def test_metrics_scale_invariance(rng):
    profits = rng.normal(0.3, 1.0, size=24)
    base = metrics(WindowProfits(profits, tuple(f"w{i}" for i in range(24))))
    for s in (0.5, 10.0):
        scaled = metrics(WindowProfits(profits * s, tuple(f"w{i}" for i in range(24))))
        assert scaled.sharpe == pytest.approx(base.sharpe, abs=1e-10)
        assert scaled.sortino == pytest.approx(base.sortino, abs=1e-10)
        assert scaled.pct_profitable == base.pct_profitable
        assert scaled.overall_profit == pytest.approx(s * base.overall_profit, rel=1e-12)
        assert scaled.max_profit == pytest.approx(s * base.max_profit, rel=1e-12)


def test_metrics_requires_two_windows():
    with pytest.raises(ValueError):
        metrics(WindowProfits(np.array([1.0]), ("a",)))


def test_mean_metrics_identity_single():
    m = metrics(WindowProfits(np.array([1.0, -1.0, 2.0]), ("a", "b", "c")))
    assert mean_metrics([m]) == m


def test_quantile_rank_curves_ordering(rng):
    curves = rng.normal(size=(9, 5)).cumsum(axis=1)
    out = quantile_rank_curves(curves)
    finals = [out[q][-1] for q in (0.0, 0.25, 0.5, 0.75, 1.0)]
    assert finals == sorted(finals)
    # each quantile curve is an actual experiment row
    assert all(any(np.array_equal(c, row) for row in curves) for c in out.values())


def test_experiment_suite_tiny(rng):
    from robustarb.synthetic import ou_pair_series, split_series
    train_s, test_s = split_series(ou_pair_series(140, seed=2), 120)
    cfg = TrainConfig(n_iter=3, n_measures=2, depth=4, epsilon=1.0, seed=100,
                      widths=(4, 5, 6), learning_rate=1e-2)
    suite = experiment_suite(train_s, test_s, cfg, CostSpec.zero(), n=4,
                             n_seeds=3, workers=1)
    assert len(suite.per_seed_metrics) == 3
    assert len(set(suite.checkpoint_hashes)) == 3
    assert set(suite.quantile_curves) == {0.0, 0.25, 0.5, 0.75, 1.0}
    assert suite.baseline is not None
    # deterministic repeat
    again = experiment_suite(train_s, test_s, cfg, CostSpec.zero(), n=4,
                             n_seeds=3, workers=1)
    assert again.checkpoint_hashes == suite.checkpoint_hashes
    assert again.mean == suite.mean
