"""Empirical path measures and Wasserstein-ball perturbations.

The empirical measure puts weight 1/M on each of the M spot-anchored candidate
paths. A perturbed measure shifts every path by a noise block: blocks are drawn
i.i.d. standard normal, each block is normalized to unit Euclidean (Frobenius)
norm and scaled by a common radius U drawn uniformly from (0, epsilon), so
every block displacement has norm U < epsilon. Pairing path l with perturbed
path l gives a transport plan whose cost, the mean block norm, upper-bounds the
1-Wasserstein distance to the empirical measure; the cost equals U exactly, so
each generated measure is certified to lie inside the epsilon-ball.

Perturbed prices may in principle become nonpositive; they are deliberately not
clamped. Choosing epsilon <= delta (the bounds slack) keeps every perturbed
path inside the per-asset price box.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .market_data import PathMatrix, _frozen

EMPIRICAL_LABEL = "empirical"


@dataclass(frozen=True)
class ScenarioSet:
    """M equally weighted future paths of shape (n, d); weight 1/M implicit."""

    paths: np.ndarray  # (M, n, d)
    label: str = EMPIRICAL_LABEL

    def __post_init__(self):
        object.__setattr__(self, "paths", _frozen(self.paths))
        if self.paths.ndim != 3:
            raise ValueError("paths must have shape (count, steps, assets)")

    @property
    def n_paths(self) -> int:
        return self.paths.shape[0]

    @property
    def terminals(self) -> np.ndarray:
        return self.paths[:, -1, :]


@dataclass(frozen=True)
class Perturbation:
    """Normalized noise blocks tau: (M, n, d), every block with norm u_eps < epsilon."""

    tau: np.ndarray
    epsilon: float
    u_eps: float

    def __post_init__(self):
        object.__setattr__(self, "tau", _frozen(self.tau))
        if self.tau.ndim != 3:
            raise ValueError("tau must have shape (count, steps, assets)")
        if not 0.0 < self.u_eps < self.epsilon:
            raise ValueError("u_eps must lie strictly between 0 and epsilon")

    @property
    def block_norms(self) -> np.ndarray:
        return np.linalg.norm(self.tau.reshape(self.tau.shape[0], -1), axis=1)


def empirical_scenarios(base: PathMatrix) -> ScenarioSet:
    return ScenarioSet(base.paths, EMPIRICAL_LABEL)


def sample_perturbation(rng: np.random.Generator, epsilon: float,
                        shape: tuple[int, int, int]) -> Perturbation:
    """Draw one perturbation for a path set of the given (M, n, d) shape.

    Draw order is fixed (raw normal blocks, then the radius) so outputs are
    bitwise reproducible from the generator state. A zero-norm raw block or an
    exact-zero radius draw is retried once, then rejected.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    m, n, d = shape
    if min(m, n, d) < 1:
        raise ValueError("shape dims must be positive")
    raw = rng.standard_normal((m, n, d))
    norms = np.linalg.norm(raw.reshape(m, -1), axis=1)
    if np.any(norms == 0.0):
        for idx in np.flatnonzero(norms == 0.0):
            raw[idx] = rng.standard_normal((n, d))
            norms[idx] = np.linalg.norm(raw[idx])
        if np.any(norms == 0.0):
            raise RuntimeError("zero-norm perturbation block after resampling")
    u_eps = float(rng.uniform(0.0, epsilon))
    if u_eps == 0.0:
        u_eps = float(rng.uniform(0.0, epsilon))
        if u_eps == 0.0:
            raise RuntimeError("degenerate zero radius draw after resampling")
    tau = raw * (u_eps / norms)[:, None, None]
    return Perturbation(tau, epsilon, u_eps)


def perturb(base: PathMatrix, p: Perturbation, label: str = "perturbed") -> ScenarioSet:
    """Shift path l by block l. Terminal values are the perturbed last components."""
    if p.tau.shape != base.paths.shape:
        raise ValueError("perturbation shape does not match path matrix")
    return ScenarioSet(base.paths + p.tau, label)


def coupling_cost(base: PathMatrix, perturbed: ScenarioSet) -> float:
    """Mean per-path displacement norm: the cost of the path-l-to-path-l transport
    plan, an upper bound on the 1-Wasserstein distance to the empirical measure."""
    if perturbed.paths.shape != base.paths.shape:
        raise ValueError("scenario shape does not match path matrix")
    diff = (perturbed.paths - base.paths).reshape(base.n_paths, -1)
    return float(np.linalg.norm(diff, axis=1).mean())


def build_ambiguity_set(rng: np.random.Generator, base: PathMatrix, epsilon: float,
                        n_measures: int) -> list[ScenarioSet]:
    """n_measures perturbed measures, each certified inside the epsilon-ball.

    epsilon == 0 selects the documented no-perturbation mode: the ambiguity set
    collapses to the empirical measure alone.
    """
    if n_measures < 1:
        raise ValueError("n_measures must be at least 1")
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    if epsilon == 0.0:
        return [empirical_scenarios(base)]
    out = []
    shape = base.paths.shape
    for m in range(1, n_measures + 1):
        p = sample_perturbation(rng, epsilon, shape)
        scen = perturb(base, p, label=f"perturbed({m})")
        cost = coupling_cost(base, scen)
        if not cost < epsilon:
            raise RuntimeError(f"coupling cost {cost} not below epsilon {epsilon}")
        out.append(scen)
    return out


def scenarios_to_csv(scenarios: ScenarioSet, path) -> None:
    """Debug dump, path-major: one row per (path, step) with d price columns."""
    m, n, d = scenarios.paths.shape
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["path", "step"] + [f"asset_{j}" for j in range(d)])
        for l in range(m):
            for i in range(n):
                writer.writerow([l, i + 1] + [repr(float(v))
                                              for v in scenarios.paths[l, i]])
