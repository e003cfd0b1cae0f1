"""Time-series containers, hourly resampling, gap filling and weather joins."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..exceptions import DataError

__all__ = [
    "Series",
    "TimeSeriesDataset",
    "resample_hourly",
    "fill_short_gaps",
    "join_weather",
    "HOUR",
]

HOUR = np.timedelta64(3600, "s")


def _as_seconds(ts) -> np.ndarray:
    return np.asarray(ts).astype("datetime64[s]")


@dataclass
class Series:
    """One channel as read from disk: timestamps in file order and values.

    ``rejected`` lists ``(line_number, reason)`` for rows that could not be
    parsed; ``non_monotone`` the line numbers whose timestamp is not later
    than the previous row's.
    """

    timestamps: np.ndarray
    values: np.ndarray
    name: str = "value"
    rejected: list = field(default_factory=list)
    non_monotone: list = field(default_factory=list)

    def __post_init__(self):
        self.timestamps = _as_seconds(self.timestamps)
        self.values = np.asarray(self.values, dtype=float)
        if self.timestamps.shape != self.values.shape:
            raise DataError("timestamps and values differ in length")

    def __len__(self):
        return len(self.values)


@dataclass
class TimeSeriesDataset:
    """Aligned load / temperature / humidity channels for one building.

    Missing values are NaN. ``interval`` is the sampling step in seconds
    (3600 once resampled).
    """

    timestamps: np.ndarray
    load: np.ndarray
    temperature: np.ndarray
    humidity: np.ndarray
    building: str = "building"
    interval: int = 3600

    def __post_init__(self):
        self.timestamps = _as_seconds(self.timestamps)
        n = len(self.timestamps)
        for name in ("load", "temperature", "humidity"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (n,):
                raise DataError(f"channel {name} has length {arr.shape}, expected {n}")
            setattr(self, name, arr)
        if n > 1 and np.any(np.diff(self.timestamps) <= np.timedelta64(0, "s")):
            raise DataError("timestamps must be strictly increasing")

    def __len__(self):
        return len(self.timestamps)

    @property
    def channels(self) -> dict:
        return {"load": self.load, "temperature": self.temperature, "humidity": self.humidity}

    def missing_mask(self) -> np.ndarray:
        return np.isnan(self.load) | np.isnan(self.temperature) | np.isnan(self.humidity)


def _hour_grid(ts):
    hours = ts.astype("datetime64[h]")
    first, last = hours.min(), hours.max()
    n = int((last - first).astype(int)) + 1
    return first, n, (hours - first).astype(int)


def _bucket_mean(idx, values, n):
    ok = ~np.isnan(values)
    sums = np.bincount(idx[ok], weights=values[ok], minlength=n)
    counts = np.bincount(idx[ok], minlength=n)
    out = np.full(n, np.nan)
    has = counts > 0
    out[has] = sums[has] / counts[has]
    return out


def resample_hourly(data):
    """Average samples into clock hours.

    Accepts a :class:`Series` or a :class:`TimeSeriesDataset` and returns the
    same type on a contiguous hourly grid; hours without samples are NaN.
    """
    if len(data) == 0:
        raise DataError("cannot resample an empty series")
    ts = _as_seconds(data.timestamps)
    first, n, idx = _hour_grid(ts)
    grid = first.astype("datetime64[s]") + np.arange(n) * HOUR
    if isinstance(data, Series):
        return Series(grid, _bucket_mean(idx, data.values, n), data.name)
    return TimeSeriesDataset(
        grid,
        _bucket_mean(idx, data.load, n),
        _bucket_mean(idx, data.temperature, n),
        _bucket_mean(idx, data.humidity, n),
        data.building,
        3600,
    )


def _fill(values, max_gap):
    v = values.copy()
    miss = np.isnan(v)
    if not miss.any() or miss.all():
        return v
    n = len(v)
    i = 0
    while i < n:
        if not miss[i]:
            i += 1
            continue
        j = i
        while j < n and miss[j]:
            j += 1
        # only interior runs bounded on both sides are interpolated
        if i > 0 and j < n and (j - i) <= max_gap:
            t = np.arange(1, j - i + 1) / (j - i + 1)
            v[i:j] = v[i - 1] + t * (v[j] - v[i - 1])
        i = j
    return v


def fill_short_gaps(ds: TimeSeriesDataset, max_gap_hours: int = 3) -> TimeSeriesDataset:
    """Linearly interpolate interior NaN runs of at most ``max_gap_hours``
    samples; longer runs stay missing and later split the data into segments."""
    return replace(
        ds,
        load=_fill(ds.load, max_gap_hours),
        temperature=_fill(ds.temperature, max_gap_hours),
        humidity=_fill(ds.humidity, max_gap_hours),
    )


def _on_grid(series: Series, start, n):
    ts = series.timestamps
    off = (ts - start) / HOUR
    if np.any(off != np.round(off)):
        raise DataError(f"series {series.name!r} is not on an hourly grid; resample first")
    off = off.astype(int)
    out = np.full(n, np.nan)
    sel = (off >= 0) & (off < n)
    out[off[sel]] = series.values[sel]
    return out


def join_weather(load: Series, temperature: Series, humidity: Series, building: str = "building") -> TimeSeriesDataset:
    """Intersect three hourly series on their common time range."""
    for s in (load, temperature, humidity):
        if len(s) == 0:
            raise DataError(f"series {s.name!r} is empty")
    start = max(s.timestamps.min() for s in (load, temperature, humidity))
    stop = min(s.timestamps.max() for s in (load, temperature, humidity))
    if stop < start:
        raise DataError(f"channels do not overlap (latest start {start}, earliest end {stop})")
    n = int((stop - start) / HOUR) + 1
    grid = start + np.arange(n) * HOUR
    return TimeSeriesDataset(
        grid,
        _on_grid(load, start, n),
        _on_grid(temperature, start, n),
        _on_grid(humidity, start, n),
        building,
        3600,
    )
