"""Run configuration: a plain-text file of dotted ``key = value`` lines.

Blank lines and ``#`` comments are ignored. Lists are comma separated.
Every key, its type and default is listed in :data:`SCHEMA` (and in the
README). Unknown keys and malformed values raise :class:`ConfigError`
with the offending line number.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .exceptions import ConfigError

__all__ = ["SCHEMA", "RunConfig", "parse_config", "load_config"]


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _floats(text: str) -> tuple:
    items = [t.strip() for t in text.split(",") if t.strip()]
    if not items:
        raise ValueError("empty list")
    return tuple(float(t) for t in items)


def _ints(text: str) -> tuple:
    items = [t.strip() for t in text.split(",") if t.strip()]
    if not items:
        raise ValueError("empty list")
    return tuple(int(t) for t in items)


def _strs(text: str) -> tuple:
    items = tuple(t.strip() for t in text.split(",") if t.strip())
    if not items:
        raise ValueError("empty list")
    return items


def _opt_str(text: str):
    return text.strip() or None


# key -> (parser, default, description)
SCHEMA = {
    "data.load_csv": (_opt_str, None, "Load CSV file (one timestamp column, one value column)."),
    "data.weather_csv": (_opt_str, None, "Weather CSV with timestamp, temperature and humidity columns."),
    "data.dataset_csv": (_opt_str, None, "Joined hourly dataset cache written by `ingest` or `synth`."),
    "data.preset": (str, "generic", "Load CSV layout preset: generic, redd, pecan or iawe."),
    "data.timestamp_column": (str, "timestamp", "Timestamp column of the load CSV (generic preset)."),
    "data.load_column": (str, "load", "Value column of the load CSV (generic preset)."),
    "data.delimiter": (str, "auto", "Field delimiter: auto, comma or tab."),
    "data.weather_timestamp_column": (str, "timestamp", "Timestamp column of the weather CSV."),
    "data.temperature_column": (str, "temperature", "Temperature column of the weather CSV."),
    "data.humidity_column": (str, "humidity", "Humidity column of the weather CSV."),
    "data.building": (str, "building", "Building label carried into outputs."),
    "data.on_error": (str, "raise", "Unparseable CSV rows: raise, or reject and report them."),
    "data.max_gap_hours": (int, 3, "Interior gaps up to this many hours are linearly interpolated."),
    "data.day_offset_hours": (float, 0.0, "Shift of the day boundary from midnight, in hours."),
    "data.on_gap": (str, "segment", "Longer gaps: segment (skip affected windows) or raise."),
    "features.window_days": (int, 3, "Trailing window length in days, 2..7."),
    "features.windows": (_ints, (2, 3, 4, 5, 6, 7), "Window sizes swept by `evaluate`."),
    "features.mode": (str, "hourly", "Window features: hourly (d = 72 w) or daily aggregates (d = 3 w)."),
    "model.kind": (str, "r2tl", "Model: rtl, r2tl, tl_ridge, ridge_raw or persistence."),
    "model.lambda": (float, 0.1, "Transform penalty weight."),
    "model.mu": (float, 1.0, "Weight of the regression term (R2TL)."),
    "model.gamma": (float, 0.05, "Ridge penalty on the read-out weights."),
    "model.epsilon": (float, 1e-3, "Cholesky fallback jitter."),
    "model.k_fraction": (float, 0.5, "Basis rows as a fraction of the input dimension, in (0, 1]."),
    "model.max_iters": (int, 20, "Maximum alternating iterations."),
    "model.rel_tol": (float, 1e-4, "Stop when the relative objective change falls below this."),
    "model.input_scaling": (str, "zscore", "Input normalization: zscore, or unit_energy (zscore divided by sqrt(d))."),
    "model.test_z0": (str, "carry", "Initial state for test sequences that continue training: carry or zero."),
    "evaluate.models": (_strs, ("r2tl", "rtl", "tl_ridge", "ridge_raw", "persistence"), "Models compared by `evaluate`."),
    "tune.lambda_grid": (_floats, (0.01, 0.03, 0.1, 0.3, 1.0), "Candidate lambda values (L-curve stage 1)."),
    "tune.gamma_grid": (_floats, (0.005, 0.015, 0.05, 0.15, 0.5), "Candidate gamma values (L-curve stage 2)."),
    "tune.mu": (float, 1.0, "mu held fixed while gamma is tuned."),
    "tune.folds": (int, 5, "Cross-validation folds on the training split."),
    "split.policy": (str, "half", "Train/test split: half (first 50% of days train)."),
    "synth.days": (int, 120, "Synthetic series length in days."),
    "synth.noise_sigma": (float, 0.05, "Relative load noise of the synthetic generator."),
    "synth.hidden_order": (int, 4, "Order of the planted recurrence."),
    "synth.daily_amplitude": (float, 0.3, "Daily seasonal amplitude (relative)."),
    "synth.weekly_amplitude": (float, 0.15, "Weekly seasonal amplitude (relative)."),
    "synth.latent_amplitude": (float, 0.25, "Amplitude of the planted latent component (relative)."),
    "synth.memory": (float, 0.97, "Spectral radius of the planted hourly recurrence."),
    "run.seed": (int, 0, "Seed for synthetic data; fits themselves are deterministic."),
    "run.out": (str, "out", "Output directory."),
}

_CHOICES = {
    "data.preset": ("generic", "redd", "pecan", "iawe"),
    "data.delimiter": ("auto", "comma", "tab"),
    "data.on_error": ("raise", "reject"),
    "data.on_gap": ("segment", "raise"),
    "features.mode": ("hourly", "daily"),
    "model.kind": ("rtl", "r2tl", "tl_ridge", "ridge_raw", "persistence"),
    "model.input_scaling": ("zscore", "unit_energy"),
    "model.test_z0": ("carry", "zero"),
    "split.policy": ("half",),
}


def _check(key, value):
    if key in _CHOICES and value not in _CHOICES[key]:
        raise ValueError(f"must be one of {_CHOICES[key]}, got {value!r}")
    if key == "evaluate.models":
        bad = [v for v in value if v not in _CHOICES["model.kind"]]
        if bad:
            raise ValueError(f"unknown model kinds {bad}")
    if key == "features.window_days" and not 2 <= value <= 7:
        raise ValueError(f"must lie in [2, 7], got {value}")
    if key == "features.windows" and any(not 2 <= w <= 7 for w in value):
        raise ValueError(f"window sizes must lie in [2, 7], got {value}")
    if key == "model.k_fraction" and not 0 < value <= 1:
        raise ValueError(f"must lie in (0, 1], got {value}")
    if key in ("model.lambda", "model.epsilon", "model.rel_tol") and not value > 0:
        raise ValueError(f"must be > 0, got {value}")
    if key in ("model.mu", "model.gamma", "tune.mu", "data.max_gap_hours", "synth.noise_sigma") and value < 0:
        raise ValueError(f"must be >= 0, got {value}")
    if key in ("model.max_iters", "synth.days", "synth.hidden_order") and value < 1:
        raise ValueError(f"must be >= 1, got {value}")
    if key == "tune.folds" and value < 2:
        raise ValueError(f"must be >= 2, got {value}")
    if key in ("tune.lambda_grid", "tune.gamma_grid"):
        if len(value) < 3 or any(v <= 0 for v in value) or any(b <= a for a, b in zip(value, value[1:])):
            raise ValueError("needs at least 3 positive, strictly increasing values")
    if key == "synth.memory" and not 0 <= value < 1:
        raise ValueError(f"must lie in [0, 1), got {value}")
    if key == "run.seed" and value < 0:
        raise ValueError(f"must be a nonnegative integer, got {value}")


@dataclass
class RunConfig:
    """Parsed configuration; missing keys take their :data:`SCHEMA` default."""

    values: dict = field(default_factory=dict)
    source: str | None = None

    def __post_init__(self):
        merged = {k: spec[1] for k, spec in SCHEMA.items()}
        for k, v in self.values.items():
            if k not in SCHEMA:
                raise ConfigError(f"unknown configuration key {k!r}")
            try:
                _check(k, v)
            except ValueError as exc:
                raise ConfigError(f"{k}: {exc}") from None
            merged[k] = v
        self.values = merged

    def __getitem__(self, key):
        return self.values[key]

    def override(self, **pairs) -> "RunConfig":
        """Copy with dotted keys given as ``data__load_csv=...`` style kwargs."""
        vals = dict(self.values)
        vals.update({k.replace("__", "."): v for k, v in pairs.items()})
        return RunConfig(vals, self.source)

    def set(self, key: str, value) -> "RunConfig":
        vals = dict(self.values)
        vals[key] = value
        return RunConfig(vals, self.source)

    def model_params(self) -> dict:
        """Keyword arguments for :func:`rtlearn.pipeline.make_forecaster`."""
        v = self.values
        return {
            "lam": v["model.lambda"], "mu": v["model.mu"], "gamma": v["model.gamma"],
            "epsilon": v["model.epsilon"], "k_fraction": v["model.k_fraction"],
            "max_iters": v["model.max_iters"], "rel_tol": v["model.rel_tol"],
            "test_z0": v["model.test_z0"], "input_scaling": v["model.input_scaling"],
        }


def parse_config(text: str, source: str | None = None) -> RunConfig:
    where = source or "<config>"
    values, lines = {}, {}
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"{where}:{ln}: expected 'key = value', got {raw.strip()!r}")
        if key not in SCHEMA:
            raise ConfigError(f"{where}:{ln}: unknown configuration key {key!r}")
        if key in values:
            raise ConfigError(f"{where}:{ln}: key {key!r} already set on line {lines[key]}")
        try:
            parsed = SCHEMA[key][0](value.strip())
            _check(key, parsed)
        except ValueError as exc:
            raise ConfigError(f"{where}:{ln}: {key}: {exc}") from None
        values[key], lines[key] = parsed, ln
    return RunConfig(values, source)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except (OSError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    return parse_config(text, str(path))
