"""Price history loading, alignment, spot normalization, and future-path construction.

Prices are treated as opaque positive values on equispaced trading days; dates
are opaque sortable strings. A length-N history of d assets yields N - n
candidate future paths of n steps each: path l rescales the observed segment
starting at date l so that it is anchored at the current spot,

    path[l, i, j] = spot[j] * Y[l + i, j] / Y[l, j],   i = 1..n.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)

DEFAULT_TARGET_SPOT = 100.0


def _frozen(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=float)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class PriceSeries:
    """Aligned multi-asset price history: one row per trading day, no gaps."""

    dates: tuple[str, ...]
    prices: np.ndarray  # (N, d), strictly positive
    tickers: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "dates", tuple(self.dates))
        object.__setattr__(self, "tickers", tuple(self.tickers))
        prices = _frozen(self.prices)
        object.__setattr__(self, "prices", prices)
        if prices.ndim != 2:
            raise ValueError("prices must be a 2-d matrix")
        if len(self.dates) != prices.shape[0]:
            raise ValueError("date count does not match price row count")
        if len(self.tickers) != prices.shape[1]:
            raise ValueError("ticker count does not match price columns")
        if prices.size and not np.all(prices > 0):
            raise ValueError("nonpositive price")
        if any(a >= b for a, b in zip(self.dates, self.dates[1:])):
            raise ValueError("dates must be strictly increasing")

    @property
    def n_dates(self) -> int:
        return len(self.dates)

    @property
    def n_assets(self) -> int:
        return len(self.tickers)


@dataclass(frozen=True)
class AssetBounds:
    """Per-asset price box [lower, upper] with the slack ``delta`` already applied."""

    lower: np.ndarray  # (d,)
    upper: np.ndarray  # (d,)
    delta: float

    def __post_init__(self):
        object.__setattr__(self, "lower", _frozen(self.lower))
        object.__setattr__(self, "upper", _frozen(self.upper))
        if self.lower.shape != self.upper.shape or self.lower.ndim != 1:
            raise ValueError("lower/upper must be equal-length vectors")
        if self.delta < 0:
            raise ValueError("delta must be nonnegative")
        if not np.all(self.lower < self.upper):
            raise ValueError("lower bound must be strictly below upper bound")

    @property
    def n_assets(self) -> int:
        return self.lower.shape[0]

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Componentwise inclusive membership of points (..., d) in the box."""
        pts = np.asarray(points, dtype=float)
        return np.all((pts >= self.lower) & (pts <= self.upper), axis=-1)


@dataclass(frozen=True)
class PathMatrix:
    """N - n candidate future paths of shape (n, d), anchored at ``spot``."""

    paths: np.ndarray  # (N - n, n, d)
    spot: np.ndarray   # (d,)

    def __post_init__(self):
        object.__setattr__(self, "paths", _frozen(self.paths))
        object.__setattr__(self, "spot", _frozen(self.spot))
        if self.paths.ndim != 3:
            raise ValueError("paths must have shape (count, steps, assets)")
        if self.spot.ndim != 1 or self.spot.shape[0] != self.paths.shape[2]:
            raise ValueError("spot length must match asset count")
        if self.paths.shape[0] < 1:
            raise ValueError("need at least one path")
        if not np.all(self.paths > 0):
            raise ValueError("unperturbed path entries must be strictly positive")
        if not np.all(self.spot > 0):
            raise ValueError("spot must be componentwise positive")

    @property
    def n_paths(self) -> int:
        return self.paths.shape[0]

    @property
    def n_steps(self) -> int:
        return self.paths.shape[1]

    @property
    def n_assets(self) -> int:
        return self.paths.shape[2]


def load_series_with_report(path, tickers) -> tuple[PriceSeries, int]:
    """Load and align a CSV; returns the series and the dropped-row count.

    CSV contract: header ``date,TICKER1,...,TICKERd``, one row per trading day,
    decimal-point reals, UTF-8. Any row missing a price for any requested
    ticker is dropped (inner join).
    """
    tickers = tuple(tickers)
    if not tickers:
        raise ValueError("at least one ticker required")
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise ValueError(f"{path}: empty file") from None
            rows = list(reader)
    except OSError as exc:
        raise ValueError(f"cannot read {path}: {exc}") from exc

    header = [h.strip() for h in header]
    if not header or header[0].lower() != "date":
        raise ValueError(f"{path}: first column must be 'date'")
    col_of = {name: i for i, name in enumerate(header)}
    missing = [t for t in tickers if t not in col_of]
    if missing:
        raise ValueError(f"{path}: missing ticker columns {missing}")
    idx = [col_of[t] for t in tickers]

    kept: list[tuple[str, list[float]]] = []
    dropped = 0
    for row in rows:
        if not row or all(not c.strip() for c in row):
            continue
        cells = [row[i].strip() if i < len(row) else "" for i in idx]
        if any(not c for c in cells):
            dropped += 1
            continue
        try:
            values = [float(c) for c in cells]
        except ValueError as exc:
            raise ValueError(f"{path}: unparseable price in row {row!r}") from exc
        kept.append((row[0].strip(), values))

    if not kept:
        raise ValueError(f"{path}: empty intersection of dates")
    kept.sort(key=lambda item: item[0])
    dates = [date for date, _ in kept]
    if len(set(dates)) != len(dates):
        raise ValueError(f"{path}: duplicate dates")
    prices = np.array([vals for _, vals in kept], dtype=float)
    if not np.all(prices > 0):
        raise ValueError(f"{path}: nonpositive price")
    if dropped:
        log.info("%s: dropped %d incomplete rows during alignment", path, dropped)
    return PriceSeries(tuple(dates), prices, tickers), dropped


def load_series(path, tickers) -> PriceSeries:
    """Load and align a CSV per the contract of :func:`load_series_with_report`."""
    series, _ = load_series_with_report(path, tickers)
    return series


def normalize_spot(series: PriceSeries, target_spot: float = DEFAULT_TARGET_SPOT) -> PriceSeries:
    """Scale each asset column so its final price equals ``target_spot``.

    Return ratios between any two dates of the same asset are unchanged.
    """
    if target_spot <= 0:
        raise ValueError("target_spot must be positive")
    if series.n_dates == 0:
        raise ValueError("series is empty")
    scale = target_spot / series.prices[-1]
    return PriceSeries(series.dates, series.prices * scale, series.tickers)


def build_paths(series: PriceSeries, spot: np.ndarray, n: int) -> PathMatrix:
    """Construct the N - n spot-anchored candidate future paths of horizon ``n``."""
    spot = np.asarray(spot, dtype=float)
    if n < 1:
        raise ValueError("horizon n must be at least 1")
    if spot.shape != (series.n_assets,):
        raise ValueError("spot length must match asset count")
    if not np.all(spot > 0):
        raise ValueError("spot must be componentwise positive")
    big_n = series.n_dates
    if big_n <= n:
        raise ValueError(f"need more than n={n} observations, got {big_n}")
    count = big_n - n
    y = series.prices
    paths = np.empty((count, n, y.shape[1]))
    anchors = y[0:count]
    for i in range(1, n + 1):
        paths[:, i - 1, :] = spot * y[i:i + count] / anchors
    return PathMatrix(paths, spot)


def compute_bounds(paths: PathMatrix, delta: float) -> AssetBounds:
    """Data-implied per-asset price box, widened by ``delta`` on each side.

    The min/max range includes the anchor point (step 0, i.e. the spot) of
    every path, so the spot itself always lies inside the box.
    """
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    lo = np.minimum(paths.paths.min(axis=(0, 1)), paths.spot)
    hi = np.maximum(paths.paths.max(axis=(0, 1)), paths.spot)
    return AssetBounds(lo - delta, hi + delta, delta)
