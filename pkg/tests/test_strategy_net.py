import numpy as np
import pytest

from robustarb.costs import CostSpec
from robustarb import strategy_net as sn

from oracles import finite_difference, relative_errors


def small_net(rng, d=2, n=3, B=5.0):
    return sn.init(rng, d, n, B=B, widths=(6, 8, 10))


def randomize(rng, net, scale=0.5):
    """Move all trainable parameters (incl. c, delta0) off their init values."""
    net.c = float(rng.uniform(-1, 1))
    net.delta0 += rng.uniform(-1, 1, size=net.delta0.shape)
    for arr in sn.trainable_arrays(net)[1:]:
        arr += rng.uniform(-scale, scale, size=arr.shape)
    return net


def test_init_defaults(rng):
    net = sn.init(rng, d=2, n=4)
    assert net.c == 0.0
    assert np.all(net.delta0 == 0.0)
    assert net.B == 10.0
    assert net.widths == (64, 128, 256)
    assert net.n_subnets == 3
    assert net.nets[1].weights[0].shape == (64, 4)   # input dim i*d = 4 at i = 2


def test_init_deterministic():
    a = sn.init(np.random.default_rng(3), 2, 3)
    b = sn.init(np.random.default_rng(3), 2, 3)
    for x, y in zip(sn.trainable_arrays(a), sn.trainable_arrays(b)):
        assert np.array_equal(x, y)


def test_outputs_bounded(rng):
    net = randomize(rng, small_net(rng), scale=3.0)
    paths = rng.uniform(1, 200, size=(10_000, 3, 2))
    pos, _ = sn.positions_batch(net, paths, train_mode=True)
    assert np.all(np.abs(pos[:, 1:, :]) <= net.B)


def test_positions_single_horizon_is_delta0(rng):
    net = sn.init(rng, d=2, n=1)
    net.delta0[:] = [1.5, -2.5]
    pos = sn.positions(net, np.array([[100.0, 90.0]]))
    assert pos.shape == (1, 2)
    assert pos.tolist() == [[1.5, -2.5]]


def test_zero_projection_gives_zero_positions(rng):
    net = small_net(rng)
    for sub in net.nets:
        sub.weights[3][:] = 0.0
        sub.biases[3][:] = 0.0
    pos = sn.positions(net, np.full((3, 2), 100.0))
    assert np.all(pos[1:] == 0.0)
    assert np.all(pos[0] == net.delta0)


def test_non_anticipativity(rng):
    net = randomize(rng, small_net(rng))
    path = rng.uniform(50, 150, size=(3, 2))
    pos = sn.positions(net, path)
    mangled = path.copy()
    mangled[2] = [999.0, 0.001]        # future of step 2
    pos2 = sn.positions(net, mangled)
    assert np.array_equal(pos[:2], pos2[:2])
    mangled[1] = [5.0, 5.0]            # now also mangle the future of step 1
    pos3 = sn.positions(net, mangled)
    assert np.array_equal(pos[:1], pos3[:1])


def test_forward_bit_reproducible(rng):
    net = randomize(rng, small_net(rng))
    path = rng.uniform(50, 150, size=(4, 3, 2))
    a, _ = sn.positions_batch(net, path, train_mode=True)
    b, _ = sn.positions_batch(net, path, train_mode=True)
    assert np.array_equal(a, b)


def test_net_profit_hand_example():
    # d=1, n=2, positions (1, 2), prices 100 -> 101 -> 100, zero costs
    net = sn.init(np.random.default_rng(0), d=1, n=2, widths=(2, 2, 2))
    net.delta0[:] = 1.0
    sub = net.nets[0]
    sub.weights[3][:] = 0.0
    sub.biases[3][:] = np.arctanh(2.0 / net.B)   # tanh then * B gives 2.0
    got = sn.net_profit(net, np.array([[101.0], [100.0]]), np.array([100.0]),
                        CostSpec.zero())
    assert got == pytest.approx(-1.0, abs=1e-12)


def test_net_profit_zero_positions(rng):
    net = small_net(rng)
    for sub in net.nets:
        sub.weights[3][:] = 0.0
        sub.biases[3][:] = 0.0
    path = rng.uniform(50, 150, size=(3, 2))
    assert sn.net_profit(net, path, np.array([100.0, 100.0]),
                         CostSpec.default_per_share()) == 0.0


def test_net_profit_constant_path_is_minus_costs(rng):
    net = randomize(rng, small_net(rng))
    path = np.full((3, 2), 100.0)
    spot = np.array([100.0, 100.0])
    spec = CostSpec.default_per_share()
    profit = sn.net_profit(net, path, spot, spec)
    pos = sn.positions(net, path)
    from robustarb.costs import total_costs
    cost = total_costs(spec, np.vstack([pos, np.zeros((1, 2))]),
                       np.vstack([spot[None], path]))
    assert profit == pytest.approx(-cost, rel=1e-12)
    assert profit < 0


def test_running_stats_update_only_when_asked(rng):
    net = small_net(rng)
    before = [sub.norm.running_mean.copy() for sub in net.nets]
    paths = rng.uniform(50, 150, size=(8, 3, 2))
    sn.positions_batch(net, paths, train_mode=True, update_norm=False)
    for sub, b in zip(net.nets, before):
        assert np.array_equal(sub.norm.running_mean, b)
    sn.positions_batch(net, paths, train_mode=True, update_norm=True)
    for sub, b in zip(net.nets, before):
        assert not np.array_equal(sub.norm.running_mean, b)


def test_positions_gradient_matches_finite_differences(rng):
    # composite scalar loss on positions: sum of squares, backprop vs central FD
    net = randomize(rng, small_net(rng, d=1, n=3))
    paths = rng.uniform(80, 120, size=(6, 3, 1))

    def loss_value():
        pos, _ = sn.positions_batch(net, paths, train_mode=True)
        return float((pos ** 2).sum())

    pos, tapes = sn.positions_batch(net, paths, train_mode=True)
    ddelta0, net_grads = sn.positions_backward(net, tapes, 2.0 * pos)
    analytic = [ddelta0] + [g[k] for g in net_grads for k in
                            ("gamma", "beta", "W0", "b0", "W1", "b1",
                             "W2", "b2", "W3", "b3")]
    numeric, _ = finite_difference(loss_value, sn.trainable_arrays(net))
    assert relative_errors(analytic, numeric) < 1e-4


def test_checkpoint_round_trip(rng):
    net = randomize(rng, small_net(rng))
    sn.positions_batch(net, rng.uniform(50, 150, (5, 3, 2)),
                       train_mode=True, update_norm=True)
    clone = sn.from_payload(sn.to_payload(net, config_hash="abc"))
    path = rng.uniform(50, 150, size=(3, 2))
    assert np.array_equal(sn.positions(net, path), sn.positions(clone, path))
    assert clone.c == net.c and clone.widths == net.widths


def test_checkpoint_rejects_wrong_kind():
    with pytest.raises(ValueError):
        sn.from_payload({"kind": "something-else"})
