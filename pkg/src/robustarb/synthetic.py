"""Synthetic cointegrated pair generator for demos and end-to-end checks.

Two assets share a common log-level random walk while their log spread follows
a stationary AR(1) (a discretized Ornstein-Uhlenbeck process), so the pair is
mean-reverting by construction:

    w_t = w_{t-1} + sigma_market * z_t                  common random walk
    s_t = (1 - kappa) * s_{t-1} + sigma_spread * u_t    OU spread around 0
    A_t = base_a * exp(w_t + s_t / 2)
    B_t = base_b * exp(w_t - s_t / 2)

with z, u independent standard normal. kappa in (0, 1) is the daily
mean-reversion rate; the stationary spread std is sigma_spread /
sqrt(1 - (1 - kappa)^2).

Run as a module to write a CSV ready for the CLI:

    python -m robustarb.synthetic out.csv --steps 2300 --seed 7
"""

from __future__ import annotations

import argparse
import csv

import numpy as np

from .market_data import PriceSeries

DEFAULT_KAPPA = 0.4
DEFAULT_SIGMA_SPREAD = 0.04
DEFAULT_SIGMA_MARKET = 0.003
DEFAULT_TICKERS = ("AAA", "BBB")


def ou_pair_series(n_steps: int, seed: int, kappa: float = DEFAULT_KAPPA,
                   sigma_spread: float = DEFAULT_SIGMA_SPREAD,
                   sigma_market: float = DEFAULT_SIGMA_MARKET,
                   base: tuple[float, float] = (100.0, 95.0),
                   tickers: tuple[str, str] = DEFAULT_TICKERS) -> PriceSeries:
    if n_steps < 2:
        raise ValueError("need at least 2 steps")
    if not 0 < kappa < 1:
        raise ValueError("kappa must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(n_steps)
    u = rng.standard_normal(n_steps)
    w = np.cumsum(sigma_market * z)
    s = np.empty(n_steps)
    level = 0.0
    for t in range(n_steps):
        level = (1.0 - kappa) * level + sigma_spread * u[t]
        s[t] = level
    a = base[0] * np.exp(w + s / 2.0)
    b = base[1] * np.exp(w - s / 2.0)
    dates = tuple(f"d{t:06d}" for t in range(n_steps))
    return PriceSeries(dates, np.column_stack([a, b]), tickers)


def split_series(series: PriceSeries, n_train: int) -> tuple[PriceSeries, PriceSeries]:
    """Chronological split into (train, test); no overlap, no shuffling."""
    if not 0 < n_train < series.n_dates:
        raise ValueError("n_train must split the series into two nonempty parts")
    train = PriceSeries(series.dates[:n_train], series.prices[:n_train], series.tickers)
    test = PriceSeries(series.dates[n_train:], series.prices[n_train:], series.tickers)
    return train, test


def write_csv(series: PriceSeries, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date", *series.tickers])
        for date, row in zip(series.dates, series.prices):
            writer.writerow([date, *(repr(float(v)) for v in row)])


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="write a synthetic pair CSV")
    parser.add_argument("out", help="output CSV path")
    parser.add_argument("--steps", type=int, default=2300)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--kappa", type=float, default=DEFAULT_KAPPA)
    parser.add_argument("--sigma-spread", type=float, default=DEFAULT_SIGMA_SPREAD)
    parser.add_argument("--sigma-market", type=float, default=DEFAULT_SIGMA_MARKET)
    args = parser.parse_args(argv)
    series = ou_pair_series(args.steps, args.seed, args.kappa,
                            args.sigma_spread, args.sigma_market)
    write_csv(series, args.out)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
