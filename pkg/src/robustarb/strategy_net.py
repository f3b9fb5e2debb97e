"""Bounded feed-forward trading networks with hand-written backpropagation.

A strategy holds a trainable cash scalar c, a constant first-day position
vector, and one subnetwork per later trading day. Subnetwork i maps the
flattened first i observed price vectors (i*d inputs) to the d positions held
from day i to day i+1:

    input standardization (mean/var, trainable scale+shift)
    -> affine -> ReLU   (width w1)
    -> affine -> ReLU   (width w2)
    -> affine -> ReLU   (width w3)
    -> affine to d outputs -> tanh -> * B   (fixed output scale)

so every position component lies in [-B, B]. Default hidden widths are
(32d, 64d, 128d). Standardization uses batch statistics while training and
frozen running statistics (momentum 0.1, eps 1e-5) at evaluation; batch
statistics depend only on the inputs, never on parameters, so parameter
gradients are exact in either mode. ReLU takes subgradient 0 at 0. All passes
are plain numpy; no autodiff framework is involved.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .costs import CostSpec, cost_grad_batch, total_costs_batch

DEFAULT_BUDGET = 10.0
NORM_MOMENTUM = 0.1
NORM_EPS = 1e-5
CHECKPOINT_SCHEMA_VERSION = 1

_PARAM_KEYS = ("gamma", "beta", "W0", "b0", "W1", "b1", "W2", "b2", "W3", "b3")


@dataclass
class InputNorm:
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = NORM_MOMENTUM
    eps: float = NORM_EPS


@dataclass
class SubNet:
    norm: InputNorm
    weights: list   # W0..W3, each (out, in)
    biases: list    # b0..b3


@dataclass
class StrategyNetwork:
    c: float
    delta0: np.ndarray  # (d,)
    nets: list          # n-1 SubNets, net i-1 has input dim i*d
    B: float
    d: int
    n: int
    widths: tuple

    @property
    def n_subnets(self) -> int:
        return len(self.nets)


@dataclass
class GradientBundle:
    """Partials of a scalar loss, shape-congruent with the trainable parameters."""

    c: float
    delta0: np.ndarray
    nets: list = field(default_factory=list)  # dicts keyed by _PARAM_KEYS


def default_widths(d: int) -> tuple[int, int, int]:
    return (32 * d, 64 * d, 128 * d)


def init(rng: np.random.Generator, d: int, n: int, B: float = DEFAULT_BUDGET,
         widths: tuple | None = None) -> StrategyNetwork:
    """Fresh strategy: c = 0, zero first-day positions, uniform(-1/sqrt(fan_in),
    1/sqrt(fan_in)) hidden weights and biases, unit-variance standardization."""
    if d < 1 or n < 1:
        raise ValueError("d and n must be at least 1")
    if B <= 0:
        raise ValueError("B must be positive")
    widths = tuple(widths) if widths is not None else default_widths(d)
    if len(widths) != 3 or min(widths) < 1:
        raise ValueError("widths must be three positive hidden sizes")
    nets = []
    for i in range(1, n):
        fan = i * d
        dims = (fan, *widths, d)
        weights, biases = [], []
        for k in range(4):
            bound = 1.0 / np.sqrt(dims[k])
            weights.append(rng.uniform(-bound, bound, size=(dims[k + 1], dims[k])))
            biases.append(rng.uniform(-bound, bound, size=dims[k + 1]))
        norm = InputNorm(np.ones(fan), np.zeros(fan), np.zeros(fan), np.ones(fan))
        nets.append(SubNet(norm, weights, biases))
    return StrategyNetwork(0.0, np.zeros(d), nets, float(B), d, n, widths)


def _forward_subnet(sub: SubNet, X: np.ndarray, B: float, train_mode: bool,
                    update_norm: bool, groups: int = 1):
    if train_mode:
        slab = X.reshape(groups, -1, X.shape[1])
        mu = slab.mean(axis=1)            # (groups, f)
        var = slab.var(axis=1)
        if update_norm:
            m = sub.norm.momentum
            for g in range(groups):       # one update per slab, in order
                sub.norm.running_mean = (1 - m) * sub.norm.running_mean + m * mu[g]
                sub.norm.running_var = (1 - m) * sub.norm.running_var + m * var[g]
        xhat = ((slab - mu[:, None, :]) / np.sqrt(var[:, None, :] + sub.norm.eps)
                ).reshape(X.shape)
    else:
        xhat = (X - sub.norm.running_mean) / np.sqrt(sub.norm.running_var
                                                     + sub.norm.eps)
    u = sub.norm.gamma * xhat + sub.norm.beta
    # ReLU applied in place; post-activation values determine the subgradient
    # mask (a > 0 iff z > 0), so pre-activations need not be kept.
    a1 = u @ sub.weights[0].T
    a1 += sub.biases[0]
    np.maximum(a1, 0.0, out=a1)
    a2 = a1 @ sub.weights[1].T
    a2 += sub.biases[1]
    np.maximum(a2, 0.0, out=a2)
    a3 = a2 @ sub.weights[2].T
    a3 += sub.biases[2]
    np.maximum(a3, 0.0, out=a3)
    t = a3 @ sub.weights[3].T
    t += sub.biases[3]
    np.tanh(t, out=t)
    out = B * t
    tape = (xhat, u, a1, a2, a3, t)
    return out, tape


def _backward_subnet(sub: SubNet, tape, dout: np.ndarray, B: float) -> dict:
    xhat, u, a1, a2, a3, t = tape
    dz4 = dout * (B * (1.0 - t * t))
    grads = {"W3": dz4.T @ a3, "b3": dz4.sum(axis=0)}
    dz3 = dz4 @ sub.weights[3]
    dz3 *= a3 > 0.0
    grads["W2"] = dz3.T @ a2
    grads["b2"] = dz3.sum(axis=0)
    dz2 = dz3 @ sub.weights[2]
    dz2 *= a2 > 0.0
    grads["W1"] = dz2.T @ a1
    grads["b1"] = dz2.sum(axis=0)
    dz1 = dz2 @ sub.weights[1]
    dz1 *= a1 > 0.0
    grads["W0"] = dz1.T @ u
    grads["b0"] = dz1.sum(axis=0)
    du = dz1 @ sub.weights[0]
    grads["gamma"] = (du * xhat).sum(axis=0)
    grads["beta"] = du.sum(axis=0)
    return grads


def positions_batch(net: StrategyNetwork, paths: np.ndarray, train_mode: bool = False,
                    update_norm: bool = False, groups: int = 1):
    """Positions (M, n, d) for a batch of paths (M, n, d), plus the backward tapes.

    Row 0 is the constant first-day position; row i comes from subnetwork i on
    the flattened first i steps, so rows never read future steps. When the batch
    concatenates several measures, pass their count as ``groups``: train-mode
    standardization statistics are then computed per consecutive equal slab
    (exactly as per-measure passes would), while the affine stack runs once.
    """
    paths = np.asarray(paths, dtype=float)
    m = paths.shape[0]
    if paths.shape[1:] != (net.n, net.d):
        raise ValueError(f"paths must have shape (batch, {net.n}, {net.d})")
    if groups < 1 or m % groups:
        raise ValueError("groups must evenly divide the batch")
    out = np.empty((m, net.n, net.d))
    out[:, 0, :] = net.delta0
    tapes = []
    for i in range(1, net.n):
        X = paths[:, :i, :].reshape(m, i * net.d)
        out[:, i, :], tape = _forward_subnet(net.nets[i - 1], X, net.B,
                                             train_mode, update_norm, groups)
        tapes.append(tape)
    return out, tapes


def positions_backward(net: StrategyNetwork, tapes, dpositions: np.ndarray):
    """Map d(loss)/d(positions) back to (d(loss)/d(delta0), per-subnet grad dicts)."""
    ddelta0 = dpositions[:, 0, :].sum(axis=0)
    net_grads = [
        _backward_subnet(net.nets[i - 1], tapes[i - 1], dpositions[:, i, :], net.B)
        for i in range(1, net.n)
    ]
    return ddelta0, net_grads


def positions(net: StrategyNetwork, path: np.ndarray) -> np.ndarray:
    """Evaluation-mode positions (n, d) for one path, using frozen statistics."""
    out, _ = positions_batch(net, np.asarray(path, dtype=float)[None], train_mode=False)
    return out[0]


def stack_prices(paths: np.ndarray, spot: np.ndarray) -> np.ndarray:
    """Prepend the (unperturbed) spot row: (M, n, d) paths -> (M, n+1, d) prices."""
    m = paths.shape[0]
    spot_row = np.broadcast_to(spot, (m, 1, paths.shape[2]))
    return np.concatenate([spot_row, paths], axis=1)


def trading_profits(spec: CostSpec, pos: np.ndarray, prices_full: np.ndarray) -> np.ndarray:
    """Net trading profit per path: sum of position * price increment, minus the
    total costs including the forced close. pos (M, n, d), prices_full (M, n+1, d)."""
    increments = prices_full[:, 1:, :] - prices_full[:, :-1, :]
    gross = (pos * increments).sum(axis=(1, 2))
    pos_ext = np.concatenate([pos, np.zeros_like(pos[:, :1, :])], axis=1)
    return gross - total_costs_batch(spec, pos_ext, prices_full)


def trading_profit_grad(spec: CostSpec, pos: np.ndarray, prices_full: np.ndarray) -> np.ndarray:
    """d(net trading profit)/d(position), shape (M, n, d)."""
    increments = prices_full[:, 1:, :] - prices_full[:, :-1, :]
    pos_ext = np.concatenate([pos, np.zeros_like(pos[:, :1, :])], axis=1)
    return increments - cost_grad_batch(spec, pos_ext, prices_full)


def net_profit(net: StrategyNetwork, path: np.ndarray, spot: np.ndarray,
               cost: CostSpec) -> float:
    """Realized net trading profit of the strategy along one path (cash excluded)."""
    path = np.asarray(path, dtype=float)
    pos = positions(net, path)
    prices_full = stack_prices(path[None], np.asarray(spot, dtype=float))
    return float(trading_profits(cost, pos[None], prices_full)[0])


# --- parameter tree utilities ---------------------------------------------------

def trainable_arrays(net: StrategyNetwork) -> list:
    """Mutable views of every trainable array, in a fixed documented order
    (delta0, then per subnet: gamma, beta, W0, b0, ..., W3, b3). The cash scalar
    c is handled separately by callers."""
    arrays = [net.delta0]
    for sub in net.nets:
        arrays.extend([sub.norm.gamma, sub.norm.beta])
        for k in range(4):
            arrays.extend([sub.weights[k], sub.biases[k]])
    return arrays


def bundle_arrays(g: GradientBundle) -> list:
    arrays = [g.delta0]
    for grads in g.nets:
        arrays.extend(grads[k] for k in _PARAM_KEYS)
    return arrays


def zero_bundle(net: StrategyNetwork) -> GradientBundle:
    nets = []
    for sub in net.nets:
        grads = {"gamma": np.zeros_like(sub.norm.gamma),
                 "beta": np.zeros_like(sub.norm.beta)}
        for k in range(4):
            grads[f"W{k}"] = np.zeros_like(sub.weights[k])
            grads[f"b{k}"] = np.zeros_like(sub.biases[k])
        nets.append(grads)
    return GradientBundle(0.0, np.zeros_like(net.delta0), nets)


def accumulate_bundle(total: GradientBundle, part_c: float, part_delta0: np.ndarray,
                      part_nets: list) -> None:
    total.c += part_c
    total.delta0 += part_delta0
    for acc, grads in zip(total.nets, part_nets):
        for k in _PARAM_KEYS:
            acc[k] += grads[k]


# --- checkpoint serialization ----------------------------------------------------

def to_payload(net: StrategyNetwork, config_hash: str | None = None) -> dict:
    payload = {
        "schema_version": CHECKPOINT_SCHEMA_VERSION,
        "kind": "strategy-checkpoint",
        "d": net.d,
        "n": net.n,
        "B": net.B,
        "widths": list(net.widths),
        "c": net.c,
        "delta0": net.delta0.tolist(),
        "norm": {"momentum": NORM_MOMENTUM, "eps": NORM_EPS},
        "nets": [
            {
                "gamma": sub.norm.gamma.tolist(),
                "beta": sub.norm.beta.tolist(),
                "running_mean": sub.norm.running_mean.tolist(),
                "running_var": sub.norm.running_var.tolist(),
                "weights": [w.tolist() for w in sub.weights],
                "biases": [b.tolist() for b in sub.biases],
            }
            for sub in net.nets
        ],
    }
    if config_hash is not None:
        payload["config_hash"] = config_hash
    return payload


def from_payload(payload: dict) -> StrategyNetwork:
    if payload.get("kind") != "strategy-checkpoint":
        raise ValueError("not a strategy checkpoint payload")
    if payload.get("schema_version") != CHECKPOINT_SCHEMA_VERSION:
        raise ValueError("unsupported checkpoint schema version")
    nets = []
    for blob in payload["nets"]:
        norm = InputNorm(
            np.array(blob["gamma"], dtype=float),
            np.array(blob["beta"], dtype=float),
            np.array(blob["running_mean"], dtype=float),
            np.array(blob["running_var"], dtype=float),
            payload["norm"]["momentum"],
            payload["norm"]["eps"],
        )
        weights = [np.array(w, dtype=float) for w in blob["weights"]]
        biases = [np.array(b, dtype=float) for b in blob["biases"]]
        nets.append(SubNet(norm, weights, biases))
    return StrategyNetwork(
        float(payload["c"]), np.array(payload["delta0"], dtype=float), nets,
        float(payload["B"]), int(payload["d"]), int(payload["n"]),
        tuple(payload["widths"]),
    )
