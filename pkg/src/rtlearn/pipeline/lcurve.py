"""L-curve corner selection and the greedy two-stage tuning protocol."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

__all__ = ["LCurveResult", "menger_curvature", "lcurve_tune", "greedy_lcurve"]


@dataclass
class LCurveResult:
    selected: float
    index: int
    grid: np.ndarray
    residuals: np.ndarray
    penalties: np.ndarray
    curvature: np.ndarray
    degenerate: bool = False

    def table(self) -> list:
        return [
            {"value": float(g), "residual": float(r), "penalty": float(p), "curvature": float(c)}
            for g, r, p, c in zip(self.grid, self.residuals, self.penalties, self.curvature)
        ]


def menger_curvature(x, y) -> np.ndarray:
    """Signed curvature of the circle through each consecutive triple.

    Endpoints get NaN. Positive values mean a counter-clockwise turn, which is
    the corner orientation of an L-curve traversed with increasing
    regularization (log residual on x, log penalty on y).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(x)
    kappa = np.full(n, np.nan)
    for j in range(1, n - 1):
        ax, ay = x[j] - x[j - 1], y[j] - y[j - 1]
        bx, by = x[j + 1] - x[j], y[j + 1] - y[j]
        cx, cy = x[j + 1] - x[j - 1], y[j + 1] - y[j - 1]
        denom = np.hypot(ax, ay) * np.hypot(bx, by) * np.hypot(cx, cy)
        kappa[j] = 0.0 if denom == 0 else 2.0 * (ax * by - ay * bx) / denom
    return kappa


def lcurve_tune(grid, evaluator, *, tol: float = 1e-9) -> LCurveResult:
    """Pick the grid value at the L-curve corner.

    Parameters
    ----------
    grid : sequence of float
        At least 3 strictly increasing positive values.
    evaluator : callable
        ``evaluator(value) -> (residual, penalty)``, both positive.
    tol : float
        Curvatures below this count as a straight line; if no point exceeds
        it the middle grid value is returned with ``degenerate=True``.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or len(grid) < 3:
        raise ValueError("grid needs at least 3 points")
    if np.any(grid <= 0) or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be positive and strictly increasing")
    res, pen = zip(*(evaluator(g) for g in grid))
    res = np.asarray(res, dtype=float)
    pen = np.asarray(pen, dtype=float)
    tiny = np.finfo(float).tiny
    kappa = menger_curvature(np.log(np.maximum(res, tiny)), np.log(np.maximum(pen, tiny)))
    inner = kappa[1:-1]
    if not np.any(inner > tol):
        mid = len(grid) // 2
        warnings.warn("L-curve has no corner; falling back to the middle grid value", RuntimeWarning)
        return LCurveResult(float(grid[mid]), mid, grid, res, pen, kappa, True)
    j = 1 + int(np.nanargmax(inner))
    return LCurveResult(float(grid[j]), j, grid, res, pen, kappa, False)


@dataclass
class GreedyResult:
    lam: LCurveResult
    gamma: LCurveResult
    mu: float = 1.0
    notes: list = field(default_factory=list)


def greedy_lcurve(lambda_grid, gamma_grid, eval_lambda, eval_gamma, mu: float = 1.0) -> GreedyResult:
    """Tune ``lam`` first (``eval_lambda(lam)``, regression terms off), then
    ``gamma`` with ``lam`` fixed at its selection and ``mu`` fixed
    (``eval_gamma(lam, gamma, mu)``)."""
    lam_res = lcurve_tune(lambda_grid, eval_lambda)
    gamma_res = lcurve_tune(gamma_grid, lambda g: eval_gamma(lam_res.selected, g, mu))
    return GreedyResult(lam_res, gamma_res, mu)
