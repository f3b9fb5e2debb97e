import numpy as np
import pytest

from robustarb.costs import CostSpec, cost_grad_batch, step_cost, total_costs

SHORT_DAILY = 0.1 / 252


def cn_oracle(spec, deltas, prices):
    """Literal scalar expansion of the path cost: sum over steps 0..n and assets
    of the three per-step terms, with zero positions before step 0 and after the
    forced close."""
    n_plus_1, d = prices.shape
    total = 0.0
    for j in range(d):
        for i in range(n_plus_1):
            prev = deltas[i - 1][j] if i >= 1 else 0.0
            cur = deltas[i][j] if i < n_plus_1 - 1 else 0.0
            x = cur - prev
            s = prices[i][j]
            if spec.trans_mode == "per_share":
                total += spec.trans_lambda * abs(x)
            elif spec.trans_mode == "proportional":
                total += spec.trans_lambda * s * abs(x)
            total += 0.5 * spec.spread_lambda * abs(x)
            total += spec.short_lambda_daily * max(-cur, 0.0) * s
    return total


def ext(deltas):
    """Append the forced zero close row."""
    deltas = np.asarray(deltas, dtype=float)
    return np.vstack([deltas, np.zeros((1, deltas.shape[1]))])


def test_step_cost_hand_example():
    spec = CostSpec("per_share", 0.01, 0.0002, SHORT_DAILY)
    got = step_cost(spec, 101.0, 10.0, -5.0)
    expect = 0.01 * 15 + 0.5 * 0.0002 * 15 + SHORT_DAILY * 5 * 101
    assert got == pytest.approx(expect, abs=1e-12)
    assert got == pytest.approx(0.351897, abs=5e-7)


def test_step_cost_no_trade_long_is_free():
    spec = CostSpec("per_share", 0.01, 0.0002, SHORT_DAILY)
    assert step_cost(spec, 50.0, 3.0, 3.0) == 0.0


def test_step_cost_proportional():
    spec = CostSpec("proportional", 0.0001, 0.0, 0.0)
    assert step_cost(spec, 100.0, 0.0, 10.0) == pytest.approx(0.1, abs=1e-15)


def test_total_costs_hand_example():
    spec = CostSpec("per_share", 0.01, 0.0002, SHORT_DAILY)
    prices = np.array([[100.0], [101.0], [99.0]])
    positions = ext([[10.0], [-5.0]])
    got = total_costs(spec, positions, prices)
    expect = 0.01 * 30 + 0.0001 * 30 + SHORT_DAILY * 5 * 101
    assert got == pytest.approx(expect, abs=1e-12)
    assert got == pytest.approx(0.503397, abs=5e-7)


def test_total_costs_zero_strategy():
    spec = CostSpec("per_share", 0.01, 0.0002, SHORT_DAILY)
    prices = np.array([[100.0], [101.0], [99.0]])
    assert total_costs(spec, np.zeros((3, 1)), prices) == 0.0


def test_total_costs_all_zero_lambdas():
    spec = CostSpec.zero()
    prices = np.array([[100.0], [101.0], [99.0]])
    assert total_costs(spec, ext([[4.0], [-7.0]]), prices) == 0.0


def test_total_costs_matches_oracle_all_modes(rng):
    for _ in range(100):
        n = int(rng.integers(1, 5))
        d = int(rng.integers(1, 4))
        prices = rng.uniform(50, 150, size=(n + 1, d))
        deltas = rng.uniform(-10, 10, size=(n, d))
        for mode, lam in (("none", 0.0), ("per_share", 0.01), ("proportional", 1e-4)):
            spec = CostSpec(mode, lam, 2e-4, SHORT_DAILY)
            got = total_costs(spec, ext(deltas), prices)
            want = cn_oracle(spec, deltas.tolist(), prices)
            assert got == pytest.approx(want, abs=1e-12)


def test_total_costs_homogeneous_in_lambdas(rng):
    prices = rng.uniform(50, 150, size=(4, 2))
    deltas = rng.uniform(-5, 5, size=(3, 2))
    base = CostSpec("per_share", 0.01, 0.0002, SHORT_DAILY)
    double = CostSpec("per_share", 0.02, 0.0004, 2 * SHORT_DAILY)
    assert total_costs(double, ext(deltas), prices) == pytest.approx(
        2 * total_costs(base, ext(deltas), prices), rel=1e-14)


def test_total_costs_nonnegative_and_zero_iff_idle(rng):
    spec = CostSpec("per_share", 0.01, 0.0002, SHORT_DAILY)
    for _ in range(50):
        deltas = rng.uniform(-5, 5, size=(3, 2))
        prices = rng.uniform(50, 150, size=(4, 2))
        assert total_costs(spec, ext(deltas), prices) > 0.0
    assert total_costs(spec, np.zeros((4, 2)), rng.uniform(50, 150, (4, 2))) == 0.0


def test_total_costs_continuity_at_kink(rng):
    # bounded change across the |x| kink: cost is continuous though not smooth
    spec = CostSpec("per_share", 0.01, 0.0002, SHORT_DAILY)
    prices = rng.uniform(50, 150, size=(3, 1))
    base = np.array([[2.0], [2.0]])
    ref = total_costs(spec, ext(base), prices)
    for h in (1e-6, 1e-9):
        shifted = base.copy()
        shifted[1, 0] += h
        moved = total_costs(spec, ext(shifted), prices)
        assert abs(moved - ref) < 1.0 * h + 1e-15


def test_total_costs_finite_difference_smooth_point(rng):
    # away from kinks the cost is differentiable; central differences match
    spec = CostSpec("proportional", 1e-4, 2e-4, SHORT_DAILY)
    prices = rng.uniform(50, 150, size=(4, 2))
    deltas = rng.uniform(1.0, 5.0, size=(3, 2))  # strictly long, increasing trades
    deltas[1] += 10.0                            # keep all x bounded away from 0
    grad = cost_grad_batch(spec, ext(deltas)[None], prices[None])[0]
    h = 1e-6
    for i in range(3):
        for j in range(2):
            up, down = deltas.copy(), deltas.copy()
            up[i, j] += h
            down[i, j] -= h
            fd = (total_costs(spec, ext(up), prices)
                  - total_costs(spec, ext(down), prices)) / (2 * h)
            assert grad[i, j] == pytest.approx(fd, abs=1e-6)


def test_rejects_nonzero_close_row():
    spec = CostSpec.zero()
    with pytest.raises(ValueError, match="forced close"):
        total_costs(spec, np.ones((3, 1)), np.full((3, 1), 100.0))


def test_rejects_negative_lambda():
    with pytest.raises(ValueError):
        CostSpec("per_share", -0.01, 0.0, 0.0)
