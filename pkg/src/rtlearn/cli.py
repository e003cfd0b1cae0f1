"""Command-line front end.

Subcommands: ``synth``, ``ingest``, ``train``, ``predict``, ``evaluate`` and
``tune``. Exit codes: 0 success, 2 configuration error, 3 data error,
4 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import sys
import warnings
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, load_config, parse_config
from .exceptions import ConfigError, DataError, NumericalError
from .io import (
    CsvSpec,
    PRESETS,
    atomic_write,
    load_dataset_csv,
    load_model,
    read_dataset,
    save_dataset_csv,
    save_model,
)
from .pipeline import (
    build_design_matrix,
    compute_metrics,
    fill_short_gaps,
    greedy_lcurve,
    kfold_cv,
    make_forecaster,
    split_half,
)
from .pipeline.features import DesignMatrix
from .supervised import TrainedModel, predict
from .synth import SynthSpec, generate
from .transform import transform_penalty

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
PERSISTABLE = ("rtl", "r2tl")


def _say(msg: str = ""):
    print(msg, flush=True)


# ---------------------------------------------------------------------------
# configuration plumbing


def build_config(args) -> RunConfig:
    """Config file, then ``--set`` pairs, then the dedicated flags."""
    cfg = load_config(args.config) if args.config else RunConfig()
    for item in args.set or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        one = parse_config(f"{key.strip()} = {value.strip()}", "--set")
        cfg = cfg.set(key.strip(), one[key.strip()])
    if args.seed is not None:
        cfg = cfg.set("run.seed", args.seed)
    if args.out is not None:
        cfg = cfg.set("run.out", args.out)
    if args.window is not None:
        cfg = cfg.set("features.window_days", args.window)
    if args.model is not None:
        cfg = cfg.set("model.kind", args.model)
    return cfg


def _out(cfg) -> Path:
    out = Path(cfg["run.out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _dataset(cfg, args):
    path = getattr(args, "data", None) or cfg["data.dataset_csv"]
    if path:
        ds = load_dataset_csv(path, cfg["data.building"])
    elif cfg["data.load_csv"] and cfg["data.weather_csv"]:
        ds, _ = _ingest(cfg)
    else:
        raise ConfigError("no input data: pass --data, or set data.dataset_csv or data.load_csv + data.weather_csv")
    return fill_short_gaps(ds, cfg["data.max_gap_hours"])


def _design(cfg, ds, window=None) -> DesignMatrix:
    return build_design_matrix(
        ds,
        window or cfg["features.window_days"],
        mode=cfg["features.mode"],
        day_offset_hours=cfg["data.day_offset_hours"],
        on_gap=cfg["data.on_gap"],
    )


def _load_spec(cfg):
    delim = {"auto": None, "comma": ",", "tab": "\t"}[cfg["data.delimiter"]]
    if cfg["data.preset"] != "generic":
        return PRESETS[cfg["data.preset"]]
    return CsvSpec(cfg["data.timestamp_column"], cfg["data.load_column"], delim)


def _ingest(cfg):
    delim = {"auto": None, "comma": ",", "tab": "\t"}[cfg["data.delimiter"]]
    ds = read_dataset(
        cfg["data.load_csv"],
        cfg["data.weather_csv"],
        load_spec=_load_spec(cfg),
        temperature_column=cfg["data.temperature_column"],
        humidity_column=cfg["data.humidity_column"],
        weather_timestamp_column=cfg["data.weather_timestamp_column"],
        weather_delimiter=delim,
        building=cfg["data.building"],
        on_error=cfg["data.on_error"],
    )
    return ds, None


def _contiguous(train: DesignMatrix, test: DesignMatrix) -> bool:
    return train.n > 0 and test.n > 0 and int(test.day_index[0]) == int(train.day_index[-1]) + 1


def _csv(header, rows) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_cell(v) for v in row))
    return "\n".join(lines) + "\n"


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return "" if np.isnan(v) else repr(float(v))
    return str(v)


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(args) -> int:
    cfg = build_config(args)
    spec = SynthSpec(
        days=cfg["synth.days"],
        hidden_order=cfg["synth.hidden_order"],
        noise_sigma=cfg["synth.noise_sigma"],
        daily_amplitude=cfg["synth.daily_amplitude"],
        weekly_amplitude=cfg["synth.weekly_amplitude"],
        latent_amplitude=cfg["synth.latent_amplitude"],
        memory=cfg["synth.memory"],
        seed=cfg["run.seed"],
    )
    data = generate(spec)
    out = _out(cfg)
    stamps = [np.datetime_as_string(t, unit="s") for t in data.timestamps]
    atomic_write(out / "load.csv", _csv(("timestamp", "load"), zip(stamps, data.load)))
    atomic_write(
        out / "weather.csv",
        _csv(("timestamp", "temperature", "humidity"), zip(stamps, data.temperature, data.humidity)),
    )
    from .pipeline.data import TimeSeriesDataset

    ds = TimeSeriesDataset(data.timestamps, data.load, data.temperature, data.humidity, "synthetic")
    save_dataset_csv(ds, out / "dataset.csv")
    atomic_write(out / "synth_params.json", json.dumps(data.params, indent=2, sort_keys=True) + "\n")
    _say(f"wrote {spec.days} days ({len(data.load)} hours) of synthetic data to {out}")
    return EXIT_OK


def cmd_ingest(args) -> int:
    cfg = build_config(args)
    if args.load:
        cfg = cfg.set("data.load_csv", args.load)
    if args.weather:
        cfg = cfg.set("data.weather_csv", args.weather)
    if not (cfg["data.load_csv"] and cfg["data.weather_csv"]):
        raise ConfigError("ingest needs data.load_csv and data.weather_csv (or --load/--weather)")
    from .io import read_load_csv

    load = read_load_csv(cfg["data.load_csv"], _load_spec(cfg), name="load", on_error=cfg["data.on_error"])
    ds, _ = _ingest(cfg)
    filled = fill_short_gaps(ds, cfg["data.max_gap_hours"])
    out = _out(cfg)
    save_dataset_csv(filled, out / "dataset.csv")
    missing = int(filled.missing_mask().sum())
    _say(f"load rows parsed: {len(load)}, rejected: {len(load.rejected)}, non-monotone: {len(load.non_monotone)}")
    for ln, reason in load.rejected[:20]:
        _say(f"  rejected line {ln}: {reason}")
    _say(f"hourly dataset: {len(filled)} hours from {filled.timestamps[0]} to {filled.timestamps[-1]}, "
         f"{missing} hours still missing after filling gaps <= {cfg['data.max_gap_hours']} h")
    _say(f"wrote {out / 'dataset.csv'}")
    return EXIT_OK


def _fit(cfg, train: DesignMatrix, kind: str):
    return make_forecaster(kind, **cfg.model_params()).fit(train)


def cmd_train(args) -> int:
    cfg = build_config(args)
    kind = cfg["model.kind"]
    if kind not in PERSISTABLE:
        raise ConfigError(f"train saves rtl or r2tl models; {kind!r} is only available in evaluate")
    ds = _dataset(cfg, args)
    dm = _design(cfg, ds)
    train, _ = split_half(dm)
    fc = _fit(cfg, train, kind)
    model: TrainedModel = fc.model
    model = replace(model, meta={
        "window_days": dm.window_days, "mode": dm.mode, "day_offset_hours": cfg["data.day_offset_hours"],
        "train_days": [int(train.day_index[0]), int(train.day_index[-1])], "building": ds.building,
    })
    out = _out(cfg)
    path = save_model(model, out / "model.rtlm")
    trace = model.objective_trace
    atomic_write(out / "trace.csv", _csv(("iteration", "objective"), ((i, trace[i]) for i in range(1, len(trace)))))
    _say(f"model: {kind}, d = {model.input_dim}, k = {model.k}, trained on {train.n} days "
         f"(day_index {train.day_index[0]}..{train.day_index[-1]})")
    _say(f"initial objective: {trace[0]!r}")
    for i in range(1, len(trace)):
        _say(f"  iteration {i:3d}: {trace[i]!r}")
    _say(f"iterations used: {model.n_iters} of {model.config.max_iters}; final objective: {trace[-1]!r}")
    _say(f"wrote {path} and {out / 'trace.csv'}")
    return EXIT_OK


def cmd_predict(args) -> int:
    cfg = build_config(args)
    model = load_model(args.model_file, kind=args.model)
    meta = model.meta or {}
    window = meta.get("window_days") or args.window
    if window is None:
        raise ConfigError("the model file does not record its window; pass --window")
    if args.window is not None and args.window != window:
        raise ConfigError(f"--window {args.window} disagrees with the model's window of {window} days")
    cfg = cfg.set("features.window_days", int(window))
    if meta.get("mode"):
        cfg = cfg.set("features.mode", meta["mode"])
    if "day_offset_hours" in meta:
        cfg = cfg.set("data.day_offset_hours", float(meta["day_offset_hours"]))
    if args.input:
        ds = fill_short_gaps(load_dataset_csv(args.input), cfg["data.max_gap_hours"])
    else:
        ds = _dataset(cfg, args)
    dm = _design(cfg, ds)
    if dm.d != model.input_dim:
        raise DataError(
            f"input windows have {dm.d} features but the model expects {model.input_dim} "
            f"(days {dm.day_index[0]}..{dm.day_index[-1]})"
        )
    forecast = predict(model, dm.X)
    out = _out(cfg)
    path = atomic_write(out / "forecast.csv", _csv(("day_index", "forecast_kwh"), zip(dm.day_index, forecast)))
    _say(f"{dm.n} forecasts for day_index {dm.day_index[0]}..{dm.day_index[-1]} written to {path}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = build_config(args)
    ds = _dataset(cfg, args)
    models = (args.model,) if args.model else cfg["evaluate.models"]
    windows = (args.window,) if args.window else cfg["features.windows"]
    primary = cfg["features.window_days"] if cfg["features.window_days"] in windows else windows[0]
    rows, overlay = [], []
    for w in windows:
        dm = _design(cfg, ds, w)
        train, test = split_half(dm)
        contiguous = _contiguous(train, test)
        for kind in models:
            fc = _fit(cfg, train, kind)
            forecast = fc.predict(test, contiguous=contiguous)
            rep = compute_metrics(forecast, test.l)
            rows.append((ds.building, w, kind, rep.mae, rep.rmse, rep.mape, rep.n, rep.n_excluded))
            if w == primary:
                overlay.extend(zip(test.day_index, test.l, forecast, [kind] * test.n))
    out = _out(cfg)
    atomic_write(
        out / "metrics.csv",
        _csv(("building", "window_days", "model_kind", "mae", "rmse", "mape", "n_test", "n_excluded_mape"), rows),
    )
    atomic_write(out / "overlay.csv", _csv(("day_index", "actual_kwh", "forecast_kwh", "model_kind"), overlay))
    _say(f"{'window':>6} {'model':<12} {'MAE':>10} {'RMSE':>10} {'MAPE %':>8}")
    for _, w, kind, mae, rmse, mape, _, _ in rows:
        mape_s = "n/a" if mape is None else f"{mape:8.3f}"
        _say(f"{w:>6} {kind:<12} {mae:10.4f} {rmse:10.4f} {mape_s:>8}")
    _say(f"wrote {out / 'metrics.csv'} and {out / 'overlay.csv'} (window {primary})")
    return EXIT_OK


def _fold_scorer(cfg, stage):
    """Validation residual and regularizer for one L-curve grid point."""
    params = cfg.model_params()

    def run(train, val, lam, gamma, mu):
        if stage == "lambda":
            # regression terms off: unsupervised RTL with a least-squares read-out
            fc = make_forecaster("rtl", **{**params, "lam": lam, "mu": 0.0, "gamma": 0.0}).fit(train)
            penalty = transform_penalty(fc.model.transform)
        else:
            fc = make_forecaster("r2tl", **{**params, "lam": lam, "mu": mu, "gamma": gamma}).fit(train)
            penalty = float(fc.model.weights @ fc.model.weights)
        pred = fc.predict(val, contiguous=False)
        norm = fc.model.normalization
        resid = float(np.mean((norm.target(pred) - norm.target(val.l)) ** 2))
        return resid, penalty

    return run


def tune_hyperparameters(cfg, train: DesignMatrix):
    """Greedy L-curve on ``folds``-fold CV of the training split only."""
    folds = cfg["tune.folds"]

    def cv(stage, lam, gamma, mu):
        run = _fold_scorer(cfg, stage)
        pens = []

        def score(tr, va):
            r, p = run(tr, va, lam, gamma, mu)
            pens.append(p)
            return r

        res = kfold_cv(train, score, folds)
        return res.mean, float(np.mean(pens))

    return greedy_lcurve(
        cfg["tune.lambda_grid"],
        cfg["tune.gamma_grid"],
        lambda lam: cv("lambda", lam, 0.0, 0.0),
        lambda lam, g, mu: cv("gamma", lam, g, mu),
        mu=cfg["tune.mu"],
    )


def cmd_tune(args) -> int:
    cfg = build_config(args)
    ds = _dataset(cfg, args)
    dm = _design(cfg, ds)
    train, _ = split_half(dm)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        result = tune_hyperparameters(cfg, train)
    report = {
        "window_days": dm.window_days,
        "train_days": [int(train.day_index[0]), int(train.day_index[-1])],
        "folds": cfg["tune.folds"],
        "selected": {"lambda": result.lam.selected, "gamma": result.gamma.selected, "mu": result.mu},
        "lambda_curve": result.lam.table(),
        "gamma_curve": result.gamma.table(),
        "degenerate": {"lambda": result.lam.degenerate, "gamma": result.gamma.degenerate},
    }
    out = _out(cfg)
    atomic_write(out / "tune.json", json.dumps(report, indent=2) + "\n")
    for w in caught:
        _say(f"warning: {w.message}")
    for name, res in (("lambda", result.lam), ("gamma", result.gamma)):
        _say(f"{name} L-curve ({cfg['tune.folds']}-fold CV on {train.n} training days)")
        _say(f"  {'value':>10} {'residual':>12} {'penalty':>12} {'curvature':>10}")
        for row in res.table():
            _say(f"  {row['value']:10.4g} {row['residual']:12.5g} {row['penalty']:12.5g} {row['curvature']:10.4g}")
    _say(f"selected: lambda = {result.lam.selected:g}, gamma = {result.gamma.selected:g}, mu = {result.mu:g}")
    _say(f"wrote {out / 'tune.json'}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser and entry point


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run configuration file (dotted key = value lines)")
    common.add_argument("--seed", type=_u64, help="seed (u64) for synthetic data")
    common.add_argument("--out", help="output directory (default from run.out)")
    common.add_argument("--window", type=_window, help="window length in days, 2..7")
    common.add_argument("--model", help="model kind: rtl, r2tl, tl_ridge, ridge_raw, persistence")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")

    p = argparse.ArgumentParser(prog="rtlearn", description="Recurrent transform learning load forecasting.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("synth", parents=[common], help="generate synthetic load and weather CSVs")
    sp = sub.add_parser("ingest", parents=[common], help="read, resample and join load and weather CSVs")
    sp.add_argument("--load", help="load CSV (overrides data.load_csv)")
    sp.add_argument("--weather", help="weather CSV (overrides data.weather_csv)")
    for name, text in (("train", "fit an rtl or r2tl model on the training split"),
                       ("evaluate", "compare models per window on the held-out split"),
                       ("tune", "greedy L-curve tuning with CV on the training split")):
        sp = sub.add_parser(name, parents=[common], help=text)
        sp.add_argument("--data", help="joined dataset CSV (overrides data.dataset_csv)")
    sp = sub.add_parser("predict", parents=[common], help="forecast with a saved model")
    sp.add_argument("--model-file", required=True, help="model file written by train")
    sp.add_argument("--input", help="dataset CSV to forecast (defaults to the configured data)")
    sp.add_argument("--data", help=argparse.SUPPRESS)
    return p


def _u64(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _window(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 2 <= v <= 7:
        raise argparse.ArgumentTypeError("window must lie in 2..7")
    return v


COMMANDS = {
    "synth": cmd_synth,
    "ingest": cmd_ingest,
    "train": cmd_train,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "tune": cmd_tune,
}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
