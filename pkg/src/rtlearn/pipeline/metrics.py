"""MAE / RMSE / MAPE."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..exceptions import DataError

__all__ = ["MetricsReport", "compute_metrics", "MAPE_EPS"]

MAPE_EPS = 1e-6


@dataclass(frozen=True)
class MetricsReport:
    """Errors in the target's unit (kWh) and MAPE in percent.

    ``mape`` is None when every actual value is below the zero guard;
    ``n_excluded`` counts points left out of MAPE for that reason.
    """

    mae: float
    rmse: float
    mape: float | None
    n: int
    n_excluded: int = 0

    def as_dict(self) -> dict:
        return asdict(self)


def compute_metrics(forecast, actual, eps: float = MAPE_EPS) -> MetricsReport:
    f = np.asarray(forecast, dtype=float).reshape(-1)
    a = np.asarray(actual, dtype=float).reshape(-1)
    if f.shape != a.shape:
        raise DataError(f"forecast has {f.size} points, actual has {a.size}")
    if f.size == 0:
        raise DataError("cannot score an empty forecast")
    e = f - a
    mae = float(np.mean(np.abs(e)))
    rmse = float(np.sqrt(np.mean(e * e)))
    ok = np.abs(a) > eps
    mape = float(100.0 * np.mean(np.abs(e[ok]) / np.abs(a[ok]))) if ok.any() else None
    # sqrt(mean e^2) >= mean|e| holds exactly; guard against last-bit rounding
    rmse = max(rmse, mae)
    return MetricsReport(mae, rmse, mape, int(f.size), int((~ok).sum()))
