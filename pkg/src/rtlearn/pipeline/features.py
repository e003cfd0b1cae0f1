"""Window features for one-day-ahead forecasting.

Each column holds the trailing ``window_days`` of load, temperature and
humidity (``[load hours | temperature hours | humidity hours]``, oldest
first); its target is the total load of the following day.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..exceptions import DataError, InsufficientDataError
from .data import HOUR, TimeSeriesDataset

__all__ = ["DesignMatrix", "build_design_matrix", "daily_blocks", "MODES"]

MODES = ("hourly", "daily")
DAY = np.timedelta64(86400, "s")


@dataclass(frozen=True)
class DesignMatrix:
    X: np.ndarray
    l: np.ndarray
    day_index: np.ndarray
    window_days: int
    mode: str = "hourly"
    day0: np.datetime64 | None = None

    def __post_init__(self):
        if self.X.shape[1] != len(self.l) or len(self.l) != len(self.day_index):
            raise DataError("X, l and day_index disagree on the sample count")

    @property
    def n(self) -> int:
        return len(self.l)

    @property
    def d(self) -> int:
        return self.X.shape[0]

    def subset(self, idx) -> "DesignMatrix":
        idx = np.asarray(idx)
        return DesignMatrix(self.X[:, idx], self.l[idx], self.day_index[idx], self.window_days, self.mode, self.day0)

    def last_day_load(self) -> np.ndarray:
        """Total load of the most recent day in each window (persistence forecast)."""
        w = self.window_days
        if self.mode == "hourly":
            return self.X[24 * (w - 1):24 * w].sum(axis=0)
        return self.X[w - 1].copy()

    def date_of(self, day_index) -> np.ndarray:
        return self.day0 + np.asarray(day_index) * DAY


def daily_blocks(ds: TimeSeriesDataset, day_offset_hours: float = 0):
    """Split the hourly grid into days.

    Returns ``(day0, blocks, complete)`` where ``blocks`` has shape
    (n_days, 3, 24) ordered load/temperature/humidity and ``complete`` flags
    days whose 24 hours are all present in every channel. Day boundaries are
    local midnight shifted by ``day_offset_hours``.
    """
    if len(ds) == 0:
        raise InsufficientDataError("dataset is empty")
    if len(ds) > 1 and np.any(np.diff(ds.timestamps) != HOUR):
        raise DataError("dataset is not on a contiguous hourly grid; resample first")
    offset = np.timedelta64(int(round(day_offset_hours * 3600)), "s")
    shifted = ds.timestamps - offset
    days = shifted.astype("datetime64[D]")
    day0 = days[0]
    day_idx = (days - day0).astype(int)
    hour = ((shifted - days.astype("datetime64[s]")) // HOUR).astype(int)
    n_days = int(day_idx[-1]) + 1
    blocks = np.full((n_days, 3, 24), np.nan)
    for c, arr in enumerate((ds.load, ds.temperature, ds.humidity)):
        blocks[day_idx, c, hour] = arr
    complete = ~np.isnan(blocks).any(axis=(1, 2))
    return (day0.astype("datetime64[s]") + offset), blocks, complete


def build_design_matrix(
    ds: TimeSeriesDataset,
    window_days: int,
    *,
    mode: str = "hourly",
    day_offset_hours: float = 0,
    on_gap: str = "segment",
) -> DesignMatrix:
    """Window features and next-day total-load targets.

    ``on_gap="segment"`` skips every window touching an incomplete day, so
    no sample straddles a gap; ``on_gap="raise"`` rejects such data instead.
    """
    if not 2 <= int(window_days) <= 7:
        raise DataError(f"window_days must lie in [2, 7], got {window_days}")
    if mode not in MODES:
        raise DataError(f"unknown feature mode {mode!r}; expected one of {MODES}")
    if on_gap not in ("segment", "raise"):
        raise DataError(f"unknown gap policy {on_gap!r}")
    w = int(window_days)
    day0, blocks, complete = daily_blocks(ds, day_offset_hours)
    n_days = len(complete)

    if on_gap == "raise":
        full = np.flatnonzero(complete)
        if full.size:
            # partial days at either edge are fine; interior gaps are not
            bad = full[0] + np.flatnonzero(~complete[full[0]:full[-1] + 1])
            if bad.size:
                raise DataError(
                    f"missing values inside the used range: day_index {bad[0]}..{bad[-1]} incomplete"
                )

    cols, targets, idx = [], [], []
    for t in range(w, n_days):
        if not complete[t - w:t + 1].all():
            continue
        win = blocks[t - w:t]  # (w, 3, 24)
        if mode == "hourly":
            x = np.concatenate([win[:, c, :].ravel() for c in range(3)])
        else:
            x = np.concatenate([win[:, 0, :].sum(axis=1), win[:, 1, :].mean(axis=1), win[:, 2, :].mean(axis=1)])
        cols.append(x)
        targets.append(blocks[t, 0, :].sum())
        idx.append(t)

    if not cols:
        raise InsufficientDataError(
            f"need at least {w + 1} consecutive complete days for window {w}; found {int(complete.sum())} complete days"
        )
    X = np.column_stack(cols)
    return DesignMatrix(X, np.asarray(targets), np.asarray(idx), w, mode, day0)
