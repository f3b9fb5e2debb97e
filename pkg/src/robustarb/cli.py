"""Command-line front door: ingest, train, backtest, online-backtest, sweep, report.

Runs are driven by a JSON config file with flat sections mirroring the module
configs (data, costs, train, backtest, sweep, output_dir); CLI flags override
file values and the ROBUSTARB_OUTPUT_DIR environment variable overrides the
output directory. Every artifact embeds a schema tag and is byte-identical
across reruns with the same config and seed; wall-clock timestamps are isolated
in run_meta.json.

Exit codes: 0 success, 2 input error, 3 checkpoint/config compatibility error,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from .backtest import (DEFAULT_BASELINE_UNITS, METRIC_LABELS, Metrics, WindowProfits,
                       buy_and_hold, evaluate, experiment_suite, metrics,
                       one_time_buy_and_hold, window_count)
from .costs import CostSpec
from .market_data import (DEFAULT_TARGET_SPOT, PriceSeries, build_paths,
                          compute_bounds, load_series_with_report, normalize_spot)
from .trainer import TrainConfig, fine_tune_online, train
from . import strategy_net as sn

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_COMPAT = 3
EXIT_NUMERIC = 4

CONFIG_SCHEMA_VERSION = 1
QUANTILE_LABELS = {0.0: "min", 0.25: "p25", 0.5: "median", 0.75: "p75", 1.0: "max"}
ENV_OUTPUT_DIR = "ROBUSTARB_OUTPUT_DIR"

COST_PRESETS = {
    "zero": CostSpec.zero,
    "per_share": CostSpec.default_per_share,
    "proportional": CostSpec.default_proportional,
}


class InputError(Exception):
    pass


class CompatibilityError(Exception):
    pass


# --- config handling -------------------------------------------------------------

def load_config(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except FileNotFoundError:
        raise InputError(f"config not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise InputError("config root must be a JSON object")
    return cfg


def _section(cfg: dict, name: str) -> dict:
    sect = cfg.get(name, {})
    if not isinstance(sect, dict):
        raise InputError(f"config section '{name}' must be an object")
    return dict(sect)


def parse_costs(cfg: dict) -> CostSpec:
    sect = _section(cfg, "costs")
    preset = sect.pop("preset", "zero")
    if preset not in COST_PRESETS:
        raise InputError(f"unknown cost preset '{preset}'")
    base = COST_PRESETS[preset]()
    fields = {k: sect[k] for k in
              ("trans_mode", "trans_lambda", "spread_lambda", "short_lambda_daily")
              if k in sect}
    unknown = set(sect) - {"trans_mode", "trans_lambda", "spread_lambda",
                           "short_lambda_daily"}
    if unknown:
        raise InputError(f"unknown cost fields: {sorted(unknown)}")
    try:
        return replace(base, **fields)
    except ValueError as exc:
        raise InputError(str(exc)) from None


def parse_train_config(cfg: dict, seed_override: int | None = None) -> TrainConfig:
    sect = _section(cfg, "train")
    if seed_override is not None:
        sect["seed"] = seed_override
    if "widths" in sect and sect["widths"] is not None:
        sect["widths"] = tuple(sect["widths"])
    try:
        return TrainConfig(**sect)
    except (TypeError, ValueError) as exc:
        raise InputError(f"bad train config: {exc}") from None


def data_settings(cfg: dict):
    sect = _section(cfg, "data")
    for key in ("train_csv", "tickers", "n"):
        if key not in sect:
            raise InputError(f"config data section missing '{key}'")
    n = int(sect["n"])
    if n < 1:
        raise InputError("data.n must be at least 1")
    return {
        "train_csv": sect["train_csv"],
        "test_csv": sect.get("test_csv"),
        "tickers": tuple(sect["tickers"]),
        "n": n,
        "target_spot": float(sect.get("target_spot", DEFAULT_TARGET_SPOT)),
        "delta": sect.get("delta"),
    }


def resolved_config(cfg: dict, tcfg: TrainConfig, data: dict) -> dict:
    d = len(data["tickers"])
    return {
        "schema_version": CONFIG_SCHEMA_VERSION,
        "data": {**data, "delta": data["delta"] if data["delta"] is not None
                 else tcfg.resolved_epsilon(d)},
        "train": {
            "n_iter": tcfg.n_iter, "k": tcfg.k,
            "epsilon": tcfg.resolved_epsilon(d),
            "n_measures": tcfg.n_measures, "depth": tcfg.depth,
            "learning_rate": tcfg.resolved_learning_rate(d),
            "B": tcfg.B, "seed": tcfg.seed, "online_iters": tcfg.online_iters,
            "optimizer": tcfg.optimizer,
            "widths": list(tcfg.widths) if tcfg.widths else None,
            "penalty_lambda": tcfg.penalty_lambda,
            "penalty_power": tcfg.penalty_power,
        },
        "costs": _section(cfg, "costs"),
        "backtest": _section(cfg, "backtest"),
        "sweep": _section(cfg, "sweep"),
    }


def config_hash(resolved: dict) -> str:
    return hashlib.sha256(
        json.dumps(resolved, sort_keys=True).encode()).hexdigest()


def output_dir(cfg: dict, flag_value: str | None) -> Path:
    path = flag_value or os.environ.get(ENV_OUTPUT_DIR) or cfg.get("output_dir")
    if not path:
        raise InputError("no output directory (config output_dir, env var, or flag)")
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


# --- deterministic writers -------------------------------------------------------

def _write_text(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8")


def _write_json(path: Path, payload: dict) -> None:
    _write_text(path, json.dumps(payload, sort_keys=True, indent=2) + "\n")


def _fmt(x) -> str:
    return repr(float(x))


def _csv_text(schema: str, header: list, rows: list) -> str:
    buf = io.StringIO()
    buf.write(f"# schema: robustarb/{schema}/1\n")
    writer = csv.writer(buf)
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def write_metrics_files(out: Path, strategy: Metrics, baseline: Metrics | None,
                        one_time: float | None) -> None:
    table = {"strategy": strategy.as_rows()}
    if baseline is not None:
        table["buy_and_hold"] = baseline.as_rows()
    if one_time is not None:
        table["one_time_buy_and_hold"] = {"Average Profit": one_time}
    columns = list(table)
    rows = []
    for label in METRIC_LABELS:
        row = [label]
        for col in columns:
            value = table[col].get(label)
            row.append("" if value is None else _fmt(value))
        rows.append(row)
    _write_text(out / "metrics.csv", _csv_text("metrics", ["metric", *columns], rows))
    payload = {"schema_version": 1, "metrics": table}
    if strategy.flags:
        payload["flags"] = list(strategy.flags)
    _write_json(out / "metrics.json", payload)


def write_windows_file(out: Path, profits: WindowProfits) -> None:
    rows = [[i, start, _fmt(p)]
            for i, (start, p) in enumerate(zip(profits.window_starts, profits.profits))]
    _write_text(out / "windows.csv",
                _csv_text("windows", ["window_index", "start_date", "profit"], rows))


def write_equity_file(out: Path, curves: dict) -> None:
    rows = []
    for label, curve in curves.items():
        for i, value in enumerate(curve):
            rows.append([label, i, _fmt(value)])
    _write_text(out / "equity.csv",
                _csv_text("equity", ["seed_rank_quantile", "window_index",
                                     "cumulative_profit"], rows))


def write_run_meta(out: Path, command: str) -> None:
    _write_json(out / "run_meta.json",
                {"schema_version": 1, "command": command,
                 "written_at_unix": time.time()})


# --- shared pipeline pieces ------------------------------------------------------

def _load_series(path_str: str, tickers) -> tuple[PriceSeries, int]:
    if not path_str or not Path(path_str).exists():
        raise InputError(f"data not found: {path_str}")
    try:
        return load_series_with_report(path_str, tickers)
    except ValueError as exc:
        raise InputError(str(exc)) from None


def _prepare_training_inputs(cfg: dict, tcfg: TrainConfig):
    data = data_settings(cfg)
    series, _ = _load_series(data["train_csv"], data["tickers"])
    series = normalize_spot(series, data["target_spot"])
    d = len(data["tickers"])
    spot = np.full(d, data["target_spot"])
    paths = build_paths(series, spot, data["n"])
    delta = (tcfg.resolved_epsilon(d) if data["delta"] is None
             else float(data["delta"]))
    bounds = compute_bounds(paths, delta)
    return data, series, paths, bounds


def _load_checkpoint(path_str: str) -> sn.StrategyNetwork:
    if not path_str or not Path(path_str).exists():
        raise InputError(f"checkpoint not found: {path_str}")
    try:
        payload = json.loads(Path(path_str).read_text(encoding="utf-8"))
        return sn.from_payload(payload)
    except (json.JSONDecodeError, KeyError, ValueError) as exc:
        raise InputError(f"bad checkpoint {path_str}: {exc}") from None


def _check_compat(net: sn.StrategyNetwork, data: dict, tcfg: TrainConfig) -> None:
    if net.d != len(data["tickers"]) or net.n != data["n"] or net.B != tcfg.B:
        raise CompatibilityError(
            f"checkpoint (d={net.d}, n={net.n}, B={net.B}) incompatible with "
            f"config (d={len(data['tickers'])}, n={data['n']}, B={tcfg.B})")


# --- commands ---------------------------------------------------------------------

def cmd_ingest(cfg: dict, out: Path) -> int:
    data = data_settings(cfg)
    report = {"schema_version": 1}
    for role in ("train", "test"):
        path_str = data[f"{role}_csv"]
        if path_str is None:
            continue
        series, dropped = _load_series(path_str, data["tickers"])
        dest = out / f"aligned_{role}.csv"
        rows = [[date, *(_fmt(v) for v in row)]
                for date, row in zip(series.dates, series.prices)]
        _write_text(dest, _csv_text("aligned-series", ["date", *series.tickers], rows))
        report[role] = {"rows": series.n_dates, "dropped": dropped,
                        "first_date": series.dates[0], "last_date": series.dates[-1]}
    _write_json(out / "ingest_report.json", report)
    write_run_meta(out, "ingest")
    return EXIT_OK


def cmd_train(cfg: dict, out: Path, seed_override: int | None = None) -> int:
    tcfg = parse_train_config(cfg, seed_override)
    data, _, paths, bounds = _prepare_training_inputs(cfg, tcfg)
    costs = parse_costs(cfg)
    net, log = train(paths, bounds, tcfg, costs)
    resolved = resolved_config(cfg, tcfg, data)
    chash = config_hash(resolved)
    _write_json(out / "checkpoint.json", sn.to_payload(net, config_hash=chash))
    _write_text(out / "training_log.csv", log.to_csv())
    _write_json(out / "config_echo.json", {**resolved, "config_hash": chash})
    write_run_meta(out, "train")
    return EXIT_OK


def _backtest_common(cfg: dict):
    tcfg = parse_train_config(cfg)
    data = data_settings(cfg)
    if not data["test_csv"]:
        raise InputError("config data.test_csv required for backtesting")
    test, _ = _load_series(data["test_csv"], data["tickers"])
    costs = parse_costs(cfg)
    bt = _section(cfg, "backtest")
    units = float(bt.get("units", DEFAULT_BASELINE_UNITS))
    include = bool(bt.get("include_baselines", True))
    return tcfg, data, test, costs, units, include


def _emit_backtest_outputs(out: Path, profits: WindowProfits, test: PriceSeries,
                           data: dict, costs: CostSpec, units: float,
                           include: bool) -> None:
    base = one_time = None
    if include:
        base = metrics(buy_and_hold(test, data["n"], units, costs,
                                    data["target_spot"]))
        one_time = one_time_buy_and_hold(test, data["n"], units, costs,
                                         data["target_spot"])
    write_metrics_files(out, metrics(profits), base, one_time)
    write_windows_file(out, profits)
    write_equity_file(out, {"single": profits.equity_curve()})


def cmd_backtest(cfg: dict, checkpoint_path: str, out: Path) -> int:
    tcfg, data, test, costs, units, include = _backtest_common(cfg)
    net = _load_checkpoint(checkpoint_path)
    _check_compat(net, data, tcfg)
    profits = evaluate(net, test, data["target_spot"], costs)
    _emit_backtest_outputs(out, profits, test, data, costs, units, include)
    write_run_meta(out, "backtest")
    return EXIT_OK


def cmd_online_backtest(cfg: dict, checkpoint_path: str, out: Path) -> int:
    """Walk test windows left to right, fine-tuning on all previously observed
    prices each time the window shifts forward, then trading the window."""
    tcfg, data, test, costs, units, include = _backtest_common(cfg)
    net = _load_checkpoint(checkpoint_path)
    _check_compat(net, data, tcfg)
    n = data["n"]
    train_series, _ = _load_series(data["train_csv"], data["tickers"])
    d = len(data["tickers"])
    spot = np.full(d, data["target_spot"])
    base_paths = build_paths(normalize_spot(train_series, data["target_spot"]),
                             spot, n)
    delta = (tcfg.resolved_epsilon(d) if data["delta"] is None
             else float(data["delta"]))
    bounds = compute_bounds(base_paths, delta)

    w_count = window_count(test.n_dates, n)
    if w_count < 1:
        raise InputError(f"test series shorter than one window of {n} steps")
    fine_rows = []
    profits, starts = [], []
    raw = np.concatenate([train_series.prices, test.prices])
    dates = train_series.dates + test.dates
    for w in range(w_count):
        observed = train_series.n_dates + w * n + 1
        augmented = PriceSeries(dates[:observed], raw[:observed], test.tickers)
        aug_paths = build_paths(normalize_spot(augmented, data["target_spot"]),
                                spot, n)
        _, log = fine_tune_online(net, aug_paths, bounds, tcfg, costs,
                                  round_index=w + 1)
        for it, loss, c, penalty in log.rows:
            fine_rows.append([w, it, _fmt(loss), _fmt(c), _fmt(penalty)])
        block = test.prices[w * n: w * n + n + 1]
        scale = data["target_spot"] / block[0]
        prices = block * scale
        pos = sn.positions(net, prices[1:])
        profits.append(float(sn.trading_profits(costs, pos[None], prices[None])[0]))
        starts.append(test.dates[w * n])
    window_profits = WindowProfits(np.array(profits), tuple(starts))
    _emit_backtest_outputs(out, window_profits, test, data, costs, units, include)
    _write_text(out / "fine_tune_log.csv",
                _csv_text("fine-tune-log",
                          ["window_index", "iter", "loss", "c", "penalty"], fine_rows))
    write_run_meta(out, "online-backtest")
    return EXIT_OK


def _sweep_job(args):
    (paths_arr, spot, lo, hi, delta, tcfg, costs, test, target_spot, value,
     seed, single_thread) = args
    from .market_data import AssetBounds, PathMatrix  # local for pickling clarity
    if single_thread:
        from .backtest import _limit_blas_threads
        _limit_blas_threads()
    data = PathMatrix(paths_arr, spot)
    bounds = AssetBounds(lo, hi, delta)
    net, _ = train(data, bounds, tcfg, costs)
    profits = evaluate(net, test, target_spot, costs)
    m = metrics(profits)
    std = float(profits.profits.std(ddof=1))
    return [value, seed, _fmt(m.overall_profit), _fmt(m.average_profit),
            _fmt(std), _fmt(m.sharpe), _fmt(m.sortino), _fmt(m.pct_profitable)]


def cmd_sweep(cfg: dict, axis: str, out: Path, workers: int = 1) -> int:
    if axis not in ("epsilon", "bounds_width"):
        raise InputError("sweep axis must be 'epsilon' or 'bounds_width'")
    tcfg, data, test, costs, _, _ = _backtest_common(cfg)
    sweep = _section(cfg, "sweep")
    grid = sweep.get(f"{axis}_grid")
    if not grid:
        raise InputError(f"config sweep.{axis}_grid required and nonempty")
    seeds_per_value = int(sweep.get("seeds_per_value", 5))
    _, _, paths, bounds0 = _prepare_training_inputs(cfg, tcfg)
    d = len(data["tickers"])
    spot = np.full(d, data["target_spot"])

    jobs = []
    for value in grid:
        value = float(value)
        if axis == "epsilon":
            if value < 0:
                raise InputError("epsilon grid values must be nonnegative")
            run_cfg = replace(tcfg, epsilon=value)
            bounds = bounds0
        else:
            if value < 1.0:
                raise InputError("bounds_width grid values must be >= 1 "
                                 "(bounds must contain the observed paths)")
            base_width = float(np.max(bounds0.upper - bounds0.lower))
            delta = bounds0.delta + (value - 1.0) / 2.0 * base_width
            bounds = compute_bounds(paths, delta)
            run_cfg = tcfg
        for s in range(seeds_per_value):
            jobs.append((paths.paths, spot, bounds.lower, bounds.upper, bounds.delta,
                         replace(run_cfg, seed=tcfg.seed + s), costs, test,
                         data["target_spot"], value, tcfg.seed + s, workers > 1))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_job, jobs))
    else:
        rows = [_sweep_job(job) for job in jobs]
    header = [axis, "seed", "overall_profit", "average_profit", "profit_std",
              "sharpe", "sortino", "pct_profitable"]
    _write_text(out / "sweep.csv", _csv_text("sweep", header, rows))
    write_run_meta(out, "sweep")
    return EXIT_OK


def cmd_report(cfg: dict, out: Path, n_seeds: int | None = None,
               workers: int = 1) -> int:
    tcfg, data, test, costs, units, include = _backtest_common(cfg)
    bt = _section(cfg, "backtest")
    n_seeds = int(bt.get("n_seeds", 50)) if n_seeds is None else n_seeds
    train_series, _ = _load_series(data["train_csv"], data["tickers"])
    train_series = normalize_spot(train_series, data["target_spot"])
    delta = None if data["delta"] is None else float(data["delta"])
    suite = experiment_suite(train_series, test, tcfg, costs, data["n"],
                             n_seeds=n_seeds, spot_norm=data["target_spot"],
                             delta=delta, units=units,
                             include_baselines=include, workers=workers)
    write_metrics_files(out, suite.mean, suite.baseline, suite.one_time_baseline)
    per_seed_rows = [
        [tcfg.seed + i] + [_fmt(v) for v in m.as_rows().values()]
        for i, m in enumerate(suite.per_seed_metrics)
    ]
    _write_text(out / "metrics_per_seed.csv",
                _csv_text("metrics-per-seed", ["seed", *METRIC_LABELS], per_seed_rows))
    curves = {QUANTILE_LABELS[q]: c for q, c in suite.quantile_curves.items()}
    write_equity_file(out, curves)
    _write_text(out / "checkpoint_hashes.txt",
                "".join(h + "\n" for h in suite.checkpoint_hashes))
    write_run_meta(out, "report")
    return EXIT_OK


# --- entry point -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="robustarb",
        description="detect and backtest robust statistical arbitrage strategies")
    parser.add_argument("--config", required=True, help="JSON config file")
    parser.add_argument("--output-dir", default=None)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("ingest")
    p_train = sub.add_parser("train")
    p_train.add_argument("--seed", type=int, default=None)
    for name in ("backtest", "online-backtest"):
        p = sub.add_parser(name)
        p.add_argument("--checkpoint", required=True)
    p_sweep = sub.add_parser("sweep")
    p_sweep.add_argument("--axis", required=True, choices=["epsilon", "bounds_width"])
    p_sweep.add_argument("--workers", type=int, default=1)
    p_report = sub.add_parser("report")
    p_report.add_argument("--n-seeds", type=int, default=None)
    p_report.add_argument("--workers", type=int, default=1)
    return parser


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cfg = load_config(args.config)
    out = output_dir(cfg, args.output_dir)
    if args.command == "ingest":
        return cmd_ingest(cfg, out)
    if args.command == "train":
        return cmd_train(cfg, out, seed_override=args.seed)
    if args.command == "backtest":
        return cmd_backtest(cfg, args.checkpoint, out)
    if args.command == "online-backtest":
        return cmd_online_backtest(cfg, args.checkpoint, out)
    if args.command == "sweep":
        return cmd_sweep(cfg, args.axis, out, workers=args.workers)
    if args.command == "report":
        return cmd_report(cfg, out, n_seeds=args.n_seeds, workers=args.workers)
    raise InputError(f"unknown command {args.command}")


def main(argv=None) -> int:
    try:
        return run(argv)
    except CompatibilityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_COMPAT
    except (ArithmeticError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (InputError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ValueError as exc:
        from .partition import OutOfBoundsError
        if isinstance(exc, OutOfBoundsError):
            print(f"numerical failure: {exc}", file=sys.stderr)
            return EXIT_NUMERIC
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    raise SystemExit(main())
