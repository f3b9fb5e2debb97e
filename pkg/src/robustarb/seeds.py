"""Named deterministic RNG substreams.

All randomness in a run flows from one base seed. Each consumer draws from a
named substream so components can be re-run in isolation without disturbing
each other: generators are PCG64 seeded via SeedSequence([seed, stream_id,
*extra]). Normal variates come from numpy's ziggurat standard_normal. Suite
replicas do not get a stream of their own; replica r simply runs with base
seed + r and derives its streams from there.
"""

from __future__ import annotations

import numpy as np

STREAM_IDS = {
    "init": 0,        # network weight initialization
    "partition": 1,   # random box partition corners
    "perturb": 2,     # ambiguity-set perturbations (extra index = fine-tune round)
}


def stream(seed: int, name: str, *extra: int) -> np.random.Generator:
    """Generator for the named substream of ``seed``; deterministic and independent."""
    if seed < 0:
        raise ValueError("seed must be nonnegative")
    return np.random.default_rng(np.random.SeedSequence([seed, STREAM_IDS[name], *extra]))
