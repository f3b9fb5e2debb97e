"""Training loop: per-iteration ambiguity-set resampling, forward/backward,
parameter update, projection onto the budget box, plus online fine-tuning.

Each iteration draws a fresh ambiguity set, evaluates the penalized objective
on the full path set under every measure, takes one gradient step, and clips
the cash scalar and first-day positions back into [-B, B]. The box partition is
sampled once per run and kept fixed; fine-tuning resumes from the current
parameters with the same partition (re-derived deterministically from the seed
and bounds) and a per-round perturbation stream.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace

import numpy as np

from .costs import CostSpec
from .market_data import AssetBounds, PathMatrix
from .measures import build_ambiguity_set
from .objective import ObjectiveConfig, PenaltyFn, penalized_loss_and_grad
from .partition import BoxPartition, OutOfBoundsError, sample_boxes
from .seeds import stream
from . import strategy_net as sn

LOG_SCHEMA_COMMENT = "# schema: robustarb/training-log/1"

OPTIMIZERS = ("sgd", "adam")


@dataclass(frozen=True)
class TrainConfig:
    """Training hyper-parameters. epsilon and learning_rate default per asset
    count d: epsilon = d, learning rate 1e-3 for d <= 2 and 1e-4 above."""

    n_iter: int = 100
    k: float = 1.0
    epsilon: float | None = None
    n_measures: int = 5
    depth: int = 12
    learning_rate: float | None = None
    B: float = 10.0
    seed: int = 0
    online_iters: int = 5
    optimizer: str = "sgd"
    widths: tuple | None = None
    penalty_lambda: float = 1.0
    penalty_power: float = 2.0

    def __post_init__(self):
        if self.n_iter < 0 or self.online_iters < 0:
            raise ValueError("iteration counts must be nonnegative")
        if self.n_measures < 1:
            raise ValueError("n_measures must be at least 1")
        if self.depth < 0:
            raise ValueError("depth must be nonnegative")
        if self.k < 0:
            raise ValueError("k must be nonnegative")
        if self.B <= 0:
            raise ValueError("B must be positive")
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}")
        if self.learning_rate is not None and self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.epsilon is not None and self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")

    def resolved_epsilon(self, d: int) -> float:
        return float(d) if self.epsilon is None else float(self.epsilon)

    def resolved_learning_rate(self, d: int) -> float:
        if self.learning_rate is not None:
            return float(self.learning_rate)
        return 1e-3 if d <= 2 else 1e-4


@dataclass
class TrainingLog:
    """Per-iteration rows (iter, loss, c, penalty), all taken at the parameters
    the iteration evaluated (before its update)."""

    rows: list = field(default_factory=list)

    def append(self, iteration: int, loss: float, c: float, penalty: float) -> None:
        self.rows.append((iteration, loss, c, penalty))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(LOG_SCHEMA_COMMENT + "\n")
        writer = csv.writer(buf)
        writer.writerow(["iter", "loss", "c", "penalty"])
        for it, loss, c, penalty in self.rows:
            writer.writerow([it, repr(loss), repr(c), repr(penalty)])
        return buf.getvalue()


class _Adam:
    def __init__(self, arrays, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = [np.zeros_like(a) for a in arrays]
        self.v = [np.zeros_like(a) for a in arrays]
        self.mc = 0.0
        self.vc = 0.0

    def step(self, net, grad, lr):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        corr1 = 1 - b1 ** self.t
        corr2 = 1 - b2 ** self.t
        self.mc = b1 * self.mc + (1 - b1) * grad.c
        self.vc = b2 * self.vc + (1 - b2) * grad.c ** 2
        net.c -= lr * (self.mc / corr1) / (np.sqrt(self.vc / corr2) + self.eps)
        params = sn.trainable_arrays(net)
        grads = sn.bundle_arrays(grad)
        for m, v, p, g in zip(self.m, self.v, params, grads):
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            p -= lr * (m / corr1) / (np.sqrt(v / corr2) + self.eps)


def _sgd_step(net, grad, lr):
    net.c -= lr * grad.c
    for p, g in zip(sn.trainable_arrays(net), sn.bundle_arrays(grad)):
        p -= lr * g


def _project(net: sn.StrategyNetwork) -> None:
    net.c = float(np.clip(net.c, -net.B, net.B))
    np.clip(net.delta0, -net.B, net.B, out=net.delta0)


def derive_partition(bounds: AssetBounds, cfg: TrainConfig) -> BoxPartition:
    """The run's fixed partition, a pure function of (seed, bounds, depth)."""
    return sample_boxes(stream(cfg.seed, "partition"), bounds, cfg.depth)


def _check_paths_in_bounds(data: PathMatrix, bounds: AssetBounds) -> None:
    if not (np.all(bounds.contains(data.paths.reshape(-1, data.n_assets)))
            and bounds.contains(data.spot)):
        raise OutOfBoundsError(
            "base paths exit the bounds box; recompute bounds from this data, or "
            "widen delta if this is an online fine-tune on augmented observations")


def _run_iterations(net, data, partition, cfg, costs, perturb_rng,
                    n_iters, log, iter_offset, opt):
    eps = cfg.resolved_epsilon(data.n_assets)
    lr = cfg.resolved_learning_rate(data.n_assets)
    obj = ObjectiveConfig(cfg.k, partition, data.spot,
                          PenaltyFn(cfg.penalty_lambda, cfg.penalty_power))
    for it in range(1, n_iters + 1):
        ambiguity = build_ambiguity_set(perturb_rng, data, eps, cfg.n_measures)
        c_before = net.c
        loss, grad, penalty = penalized_loss_and_grad(
            net, ambiguity, obj, costs, train_mode=True, update_norm=True)
        if not np.isfinite(loss):
            raise ArithmeticError(f"non-finite loss at iteration {iter_offset + it}")
        if cfg.optimizer == "adam":
            opt.step(net, grad, lr)
        else:
            _sgd_step(net, grad, lr)
        _project(net)
        log.append(iter_offset + it, loss, c_before, penalty)
    return net


def train(data: PathMatrix, bounds: AssetBounds, cfg: TrainConfig,
          costs: CostSpec) -> tuple[sn.StrategyNetwork, TrainingLog]:
    """Train a fresh strategy on the candidate paths; deterministic given cfg.seed.

    The returned network is mutated in place by any further fine-tuning.
    """
    _check_paths_in_bounds(data, bounds)
    partition = derive_partition(bounds, cfg)
    net = sn.init(stream(cfg.seed, "init"), data.n_assets, data.n_steps,
                  B=cfg.B, widths=cfg.widths)
    log = TrainingLog()
    opt = _Adam(sn.trainable_arrays(net)) if cfg.optimizer == "adam" else None
    perturb_rng = stream(cfg.seed, "perturb", 0)
    _run_iterations(net, data, partition, cfg, costs, perturb_rng,
                    cfg.n_iter, log, 0, opt)
    return net, log


def fine_tune_online(net: sn.StrategyNetwork, augmented_data: PathMatrix,
                     bounds: AssetBounds, cfg: TrainConfig, costs: CostSpec,
                     round_index: int = 1) -> tuple[sn.StrategyNetwork, TrainingLog]:
    """Run cfg.online_iters further iterations from the current parameters on the
    augmented path set. round_index keys the perturbation substream so each
    fine-tune round draws fresh, reproducible noise. Returns the mutated net and
    the round's log (iterations numbered from 1)."""
    _check_paths_in_bounds(augmented_data, bounds)
    partition = derive_partition(bounds, cfg)
    log = TrainingLog()
    opt = _Adam(sn.trainable_arrays(net)) if cfg.optimizer == "adam" else None
    perturb_rng = stream(cfg.seed, "perturb", round_index)
    _run_iterations(net, augmented_data, partition, cfg, costs, perturb_rng,
                    cfg.online_iters, log, 0, opt)
    return net, log


def config_for_seed(cfg: TrainConfig, seed: int) -> TrainConfig:
    return replace(cfg, seed=seed)
