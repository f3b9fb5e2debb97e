"""Random box families over terminal-value space and linear-time cell indexing.

A partition of the per-asset price box is induced by a family of "depth"
half-open boxes A_i = prod_j (a_j, b_j]. A terminal price vector is encoded by
its membership bits: bit i (value 2**i) is set iff the point lies in box i, so
a point's cell index is an integer in [0, 2**depth). The encoding touches each
box once, replacing the exponential explicit-cell construction with depth * d
comparisons per query.

brute_force_cells builds the explicit cells by interval set algebra
(intersections and box complements) and exists as an independent oracle for
small instances; it must never share logic with cell_index.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .market_data import AssetBounds, _frozen

BRUTE_FORCE_MAX_DEPTH = 8
BRUTE_FORCE_MAX_ASSETS = 3

PARTITION_SCHEMA_VERSION = 1


class OutOfBoundsError(ValueError):
    """A terminal value fell outside the partition's bounds box."""


@dataclass(frozen=True)
class BoxPartition:
    """Half-open boxes (open lower corner, closed upper corner) over a bounds box."""

    lowers: np.ndarray  # (depth, d) corners a, open side
    uppers: np.ndarray  # (depth, d) corners b, closed side
    bounds: AssetBounds

    def __post_init__(self):
        lowers = _frozen(np.atleast_2d(self.lowers)) if np.size(self.lowers) else \
            _frozen(np.zeros((0, self.bounds.n_assets)))
        uppers = _frozen(np.atleast_2d(self.uppers)) if np.size(self.uppers) else \
            _frozen(np.zeros((0, self.bounds.n_assets)))
        object.__setattr__(self, "lowers", lowers)
        object.__setattr__(self, "uppers", uppers)
        if lowers.shape != uppers.shape:
            raise ValueError("lowers/uppers shape mismatch")
        if lowers.shape[1:] != (self.bounds.n_assets,):
            raise ValueError("box corners must have one column per asset")
        if np.any(lowers < self.bounds.lower) or np.any(lowers > self.bounds.upper):
            raise ValueError("lower corners must lie inside the bounds box")
        if np.any(uppers > self.bounds.upper) or np.any(uppers < lowers):
            raise ValueError("upper corners must lie inside the bounds box, above lowers")
        # Boxes whose closed upper side coincides with the bounds box need no
        # upper test for in-bounds queries; the default sampler always hits this.
        object.__setattr__(
            self, "_skip_upper",
            bool(np.all(uppers == self.bounds.upper)) if lowers.shape[0] else True,
        )

    @property
    def depth(self) -> int:
        return self.lowers.shape[0]

    @property
    def n_assets(self) -> int:
        return self.bounds.n_assets

    @property
    def n_cells(self) -> int:
        return 1 << self.depth


def sample_boxes(rng: np.random.Generator, bounds: AssetBounds, depth: int) -> BoxPartition:
    """Draw ``depth`` boxes: lower corners uniform on [lower, upper], upper corners
    pinned to the bounds box's upper corner. Deterministic given the generator state."""
    if depth < 0:
        raise ValueError("depth must be nonnegative")
    d = bounds.n_assets
    lowers = rng.uniform(bounds.lower, bounds.upper, size=(depth, d))
    uppers = np.broadcast_to(bounds.upper, (depth, d)).copy()
    return BoxPartition(lowers, uppers, bounds)


def cell_index(partition: BoxPartition, terminal) -> int:
    """Binary cell code of one terminal vector: bit i set iff terminal in box i.

    Scalar reference implementation in plain Python; the membership loop makes
    exactly depth * d strict-lower comparisons for default partitions (upper
    tests are skipped when every box's upper corner equals the bounds corner).
    """
    x = list(terminal)
    bounds = partition.bounds
    d = bounds.n_assets
    if len(x) != d:
        raise ValueError("terminal length must match asset count")
    for j in range(d):
        if x[j] < bounds.lower[j] or x[j] > bounds.upper[j]:
            raise OutOfBoundsError(
                f"terminal {tuple(float(v) for v in x)} outside bounds box; "
                "widen delta or shrink epsilon (epsilon must not exceed delta)"
            )
    lowers = partition.lowers.tolist()
    skip_upper = partition._skip_upper
    uppers = partition.uppers.tolist()
    code = 0
    for i in range(partition.depth):
        inside = True
        row = lowers[i]
        for j in range(d):
            inside &= row[j] < x[j]
        if not skip_upper:
            up = uppers[i]
            for j in range(d):
                inside &= x[j] <= up[j]
        if inside:
            code |= 1 << i
    return code


def cell_indices(partition: BoxPartition, terminals: np.ndarray) -> np.ndarray:
    """Vectorized cell codes for terminals (M, d); agrees with cell_index pointwise."""
    pts = np.asarray(terminals, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != partition.n_assets:
        raise ValueError("terminals must have shape (count, assets)")
    bounds = partition.bounds
    ok = bounds.contains(pts)
    if not np.all(ok):
        bad = pts[np.argmin(ok)]
        raise OutOfBoundsError(
            f"terminal {tuple(bad)} outside bounds box; "
            "widen delta or shrink epsilon (epsilon must not exceed delta)"
        )
    if partition.depth == 0:
        return np.zeros(pts.shape[0], dtype=np.int64)
    inside = np.all(pts[:, None, :] > partition.lowers[None, :, :], axis=2)
    if not partition._skip_upper:
        inside &= np.all(pts[:, None, :] <= partition.uppers[None, :, :], axis=2)
    weights = (1 << np.arange(partition.depth, dtype=np.int64))
    return inside @ weights


# --- explicit-cell oracle -----------------------------------------------------
#
# Regions are unions of disjoint interval-product boxes; each interval carries
# its own end openness so complements of half-open boxes stay exact.

@dataclass(frozen=True)
class IntervalBox:
    lo: np.ndarray
    hi: np.ndarray
    lo_closed: np.ndarray  # bool per dim
    hi_closed: np.ndarray

    def is_empty(self) -> bool:
        degenerate = self.lo == self.hi
        return bool(np.any(self.lo > self.hi)
                    | np.any(degenerate & ~(self.lo_closed & self.hi_closed)))

    def contains(self, pts: np.ndarray) -> np.ndarray:
        above = np.where(self.lo_closed, pts >= self.lo, pts > self.lo)
        below = np.where(self.hi_closed, pts <= self.hi, pts < self.hi)
        return np.all(above & below, axis=-1)


@dataclass(frozen=True)
class ExplicitCell:
    index: int
    pieces: tuple[IntervalBox, ...]


def _intersect(box: IntervalBox, lo, hi, lo_closed, hi_closed) -> IntervalBox | None:
    """Intersect an IntervalBox with an interval product given componentwise."""
    new_lo = np.maximum(box.lo, lo)
    new_hi = np.minimum(box.hi, hi)
    new_lo_closed = np.where(box.lo == lo, box.lo_closed & lo_closed,
                             np.where(box.lo > lo, box.lo_closed, lo_closed))
    new_hi_closed = np.where(box.hi == hi, box.hi_closed & hi_closed,
                             np.where(box.hi < hi, box.hi_closed, hi_closed))
    out = IntervalBox(new_lo, new_hi, new_lo_closed, new_hi_closed)
    return None if out.is_empty() else out


def _split_piece(piece: IntervalBox, a: np.ndarray, b: np.ndarray):
    """Split one IntervalBox by the half-open box prod_j (a_j, b_j].

    Returns (inside_pieces, outside_pieces); the outside part is the standard
    disjoint staircase over dimensions.
    """
    d = piece.lo.shape[0]
    open_lo = np.zeros(d, dtype=bool)
    closed = np.ones(d, dtype=bool)
    inside = _intersect(piece, a, b, open_lo, closed)
    outside: list[IntervalBox] = []
    inf = np.inf
    for j in range(d):
        # dims < j constrained to (a, b], dim j outside (a_j, b_j], dims > j free
        lo = np.full(d, -inf)
        hi = np.full(d, inf)
        lo_cl = np.zeros(d, dtype=bool)
        hi_cl = np.ones(d, dtype=bool)
        lo[:j], hi[:j] = a[:j], b[:j]
        # below piece: x_j <= a_j
        below_hi = hi.copy(); below_hi[j] = a[j]
        cand = _intersect(piece, lo, below_hi, lo_cl, hi_cl)
        if cand is not None:
            outside.append(cand)
        # above piece: x_j > b_j
        above_lo = lo.copy(); above_lo[j] = b[j]
        above_hi_cl = hi_cl.copy(); above_hi_cl[j] = True
        above_lo_cl = lo_cl.copy(); above_lo_cl[j] = False
        cand = _intersect(piece, above_lo, hi, above_lo_cl, above_hi_cl)
        if cand is not None:
            outside.append(cand)
    return ([] if inside is None else [inside]), outside


def brute_force_cells(partition: BoxPartition) -> list[ExplicitCell]:
    """Explicit disjoint cells covering the bounds box, built by set algebra.

    Guarded to small instances; the construction is exponential by design.
    Cell indices match the binary encoding convention of cell_index.
    """
    if partition.n_assets > BRUTE_FORCE_MAX_ASSETS or partition.depth > BRUTE_FORCE_MAX_DEPTH:
        raise ValueError(
            f"brute force limited to d <= {BRUTE_FORCE_MAX_ASSETS}, "
            f"depth <= {BRUTE_FORCE_MAX_DEPTH}"
        )
    d = partition.n_assets
    base = IntervalBox(partition.bounds.lower.copy(), partition.bounds.upper.copy(),
                       np.ones(d, dtype=bool), np.ones(d, dtype=bool))
    cells: list[tuple[int, list[IntervalBox]]] = [(0, [base])]
    for i in range(partition.depth):
        a = partition.lowers[i]
        b = partition.uppers[i]
        refined: list[tuple[int, list[IntervalBox]]] = []
        for bits, pieces in cells:
            ins_all: list[IntervalBox] = []
            out_all: list[IntervalBox] = []
            for piece in pieces:
                ins, outs = _split_piece(piece, a, b)
                ins_all.extend(ins)
                out_all.extend(outs)
            if ins_all:
                refined.append((bits | (1 << i), ins_all))
            if out_all:
                refined.append((bits, out_all))
        cells = refined
    return [ExplicitCell(bits, tuple(pieces)) for bits, pieces in sorted(cells)]


def locate_cells(cells: list[ExplicitCell], points: np.ndarray) -> np.ndarray:
    """Region index for each point by direct membership scan over the cell pieces."""
    pts = np.asarray(points, dtype=float)
    out = np.full(pts.shape[0], -1, dtype=np.int64)
    hit = np.zeros(pts.shape[0], dtype=bool)
    for cell in cells:
        remaining = ~hit
        if not remaining.any():
            break
        sub = pts[remaining]
        member = np.zeros(sub.shape[0], dtype=bool)
        for piece in cell.pieces:
            member |= piece.contains(sub)
        idx = np.flatnonzero(remaining)[member]
        out[idx] = cell.index
        hit[idx] = True
    if not hit.all():
        raise ValueError("point not covered by any cell (outside bounds box?)")
    return out


# --- serialization --------------------------------------------------------------

def partition_to_json(partition: BoxPartition) -> str:
    payload = {
        "schema_version": PARTITION_SCHEMA_VERSION,
        "kind": "box-partition",
        "bounds": {
            "lower": partition.bounds.lower.tolist(),
            "upper": partition.bounds.upper.tolist(),
            "delta": partition.bounds.delta,
        },
        "lowers": partition.lowers.tolist(),
        "uppers": partition.uppers.tolist(),
    }
    return json.dumps(payload, sort_keys=True)


def partition_from_json(text: str) -> BoxPartition:
    payload = json.loads(text)
    if payload.get("kind") != "box-partition":
        raise ValueError("not a box-partition payload")
    bounds = AssetBounds(np.array(payload["bounds"]["lower"]),
                         np.array(payload["bounds"]["upper"]),
                         float(payload["bounds"]["delta"]))
    return BoxPartition(np.array(payload["lowers"], dtype=float).reshape(-1, bounds.n_assets),
                        np.array(payload["uppers"], dtype=float).reshape(-1, bounds.n_assets),
                        bounds)
