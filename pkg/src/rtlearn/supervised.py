"""Regressing recurrent transform learning (R2TL) and the RTL + ridge forecaster.

R2TL adds a linear read-out ``l_i = w^T z_i`` to the recurrent transform
and learns transform, coefficients and weights jointly:

    sum_i ||T [x_i; z_{i-1}] - z_i||^2 + mu (l_i - w^T z_i)^2
        + gamma ||w||^2 + lam (||T||_F^2 - 0.5 log det TT^T)

Each block of the alternation (transform, coefficients, weights) is solved
exactly, so the objective trace is non-increasing.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import linalg

from . import kernels
from .exceptions import DimensionError, InsufficientDataError, NumericalError
from .recurrent import (
    RtlConfig,
    RtlModel,
    build_recurrent_system,
    fit_rtl,
    relative_change,
    rtl_objective,
    solve_coefficients,
    stack_inputs,
)
from .transform import svd_init, transform_update_closed_form

__all__ = [
    "R2tlConfig",
    "Normalization",
    "TrainedModel",
    "R2tlModel",
    "BlockRegressionMatrix",
    "r2tl_objective",
    "solve_coefficients_supervised",
    "supervised_normal_equations",
    "update_regression_weights",
    "fit_r2tl",
    "fit_rtl_regressor",
    "predict",
]


INPUT_SCALINGS = ("zscore", "unit_energy")


@dataclass(frozen=True)
class R2tlConfig:
    """Hyperparameters for R2TL (and for the RTL + ridge forecaster).

    Defaults are ``lam=0.1``, ``mu=1`` and ``gamma=0.05``. ``normalize``
    z-scores features and target with training statistics (the default
    ``input_scaling="zscore"``). ``"unit_energy"`` further divides the
    standardized inputs by ``sqrt(d)`` so each input vector has unit
    average energy.
    """

    k: int
    lam: float = 0.1
    mu: float = 1.0
    gamma: float = 0.05
    epsilon: float = 1e-3
    max_iters: int = 20
    rel_tol: float = 1e-4
    normalize: bool = True
    input_scaling: str = "zscore"

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be a positive integer, got {self.k}")
        if not self.lam > 0:
            raise ValueError(f"lam must be > 0, got {self.lam}")
        if self.mu < 0 or self.gamma < 0:
            raise ValueError("mu and gamma must be nonnegative")
        if self.mu > 0 and not self.gamma > 0:
            raise ValueError("gamma must be > 0 when mu > 0")
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")
        if self.max_iters < 1:
            raise ValueError("max_iters must be a positive integer")
        if self.input_scaling not in INPUT_SCALINGS:
            raise ValueError(f"input_scaling must be one of {INPUT_SCALINGS}, got {self.input_scaling!r}")

    def rtl(self) -> RtlConfig:
        return RtlConfig(self.k, self.lam, self.epsilon, self.max_iters, self.rel_tol)


@dataclass(frozen=True)
class Normalization:
    """Affine maps ``x -> (x - x_mean) / x_scale`` and ``l -> (l - l_mean) / l_scale``."""

    x_mean: np.ndarray
    x_scale: np.ndarray
    l_mean: float = 0.0
    l_scale: float = 1.0

    @classmethod
    def identity(cls, d: int) -> "Normalization":
        return cls(np.zeros(d), np.ones(d), 0.0, 1.0)

    @classmethod
    def fit(cls, X, l, input_scaling: str = "zscore") -> "Normalization":
        X = np.asarray(X, dtype=float)
        l = np.asarray(l, dtype=float)
        d = X.shape[0]
        sd = X.std(axis=1)
        sd[sd == 0] = 1.0
        if input_scaling == "unit_energy":
            sd = sd * np.sqrt(d)
        elif input_scaling != "zscore":
            raise ValueError(f"unknown input scaling {input_scaling!r}")
        ls = float(l.std())
        return cls(X.mean(axis=1), sd, float(l.mean()), ls if ls > 0 else 1.0)

    def inputs(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.x_mean[:, None]) / self.x_scale[:, None]

    def target(self, l) -> np.ndarray:
        return (np.asarray(l, dtype=float) - self.l_mean) / self.l_scale

    def untarget(self, y) -> np.ndarray:
        return np.asarray(y, dtype=float) * self.l_scale + self.l_mean


@dataclass(frozen=True)
class TrainedModel:
    """A fitted forecaster: transform, read-out weights and normalization.

    ``kind`` is ``"r2tl"`` for the jointly learnt model and ``"rtl"`` for
    unsupervised RTL followed by a separately fitted ridge read-out.
    """

    kind: str
    transform: np.ndarray
    weights: np.ndarray
    z0: np.ndarray
    input_dim: int
    config: R2tlConfig
    normalization: Normalization
    objective_trace: tuple = ()
    z_last: np.ndarray | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        k = self.transform.shape[0]
        if self.kind not in ("rtl", "r2tl"):
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.transform.shape[1] != self.input_dim + k:
            raise DimensionError(
                f"transform has {self.transform.shape[1]} columns, expected {self.input_dim + k}"
            )
        if self.weights.shape != (k,):
            raise DimensionError(f"weights have shape {self.weights.shape}, expected ({k},)")

    @property
    def k(self) -> int:
        return self.transform.shape[0]

    @property
    def n_iters(self) -> int:
        return len(self.objective_trace) - 1

    def recurrent(self) -> RtlModel:
        return RtlModel(self.transform, self.z0, self.input_dim, self.config.rtl())

    def config_dict(self) -> dict:
        return asdict(self.config)


R2tlModel = TrainedModel


@dataclass(frozen=True)
class BlockRegressionMatrix:
    """Block-diagonal ``W`` with ``w^T`` repeated ``n`` times, stored as ``w``."""

    w: np.ndarray
    n: int

    def __matmul__(self, z):
        k = self.w.shape[0]
        return np.asarray(z, dtype=float).reshape(self.n, k) @ self.w

    def dense(self) -> np.ndarray:
        k = self.w.shape[0]
        W = np.zeros((self.n, self.n * k))
        for i in range(self.n):
            W[i, i * k:(i + 1) * k] = self.w
        return W


def r2tl_objective(T, X, Z, z0, w, l, mu, gamma, lam) -> float:
    l = np.asarray(l, dtype=float).reshape(-1)
    w = np.asarray(w, dtype=float).reshape(-1)
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    if l.shape[0] != Z.shape[1]:
        raise DimensionError(f"l has length {l.shape[0]} but Z has {Z.shape[1]} columns")
    if w.shape[0] != Z.shape[0]:
        raise DimensionError(f"w has length {w.shape[0]} but Z has {Z.shape[0]} rows")
    base = rtl_objective(T, X, Z, z0, lam)
    r = l - w @ Z
    return base + mu * float(r @ r) + gamma * float(w @ w)


def supervised_normal_equations(T, X, z0, w, l, mu):
    """Blocks of ``(D^T D + mu W^T W) z = D^T rhs + mu W^T l``.

    Returns ``(diag, sub, rhs)`` in the layout used by
    :func:`rtlearn.kernels.block_tridiag_solve`.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    l = np.asarray(l, dtype=float).reshape(-1)
    w = np.asarray(w, dtype=float).reshape(-1)
    sys = build_recurrent_system(T, X, z0)
    k, n = sys.k, sys.n
    if l.shape[0] != n:
        raise DimensionError(f"l has length {l.shape[0]}, X has {n} columns")
    if w.shape[0] != k:
        raise DimensionError(f"w has length {w.shape[0]}, expected k = {k}")
    T2 = sys.feedback
    r = sys.rhs
    ww = mu * np.outer(w, w)
    diag = np.empty((n, k, k))
    diag[:] = np.eye(k) + T2.T @ T2 + ww
    diag[-1] = np.eye(k) + ww
    b = r + mu * l[:, None] * w[None, :]
    b[:-1] -= r[1:] @ T2
    return diag, -T2, b


def solve_coefficients_supervised(T, X, z0, w, l, mu: float) -> np.ndarray:
    """Minimize ``||rhs - Dz||^2 + mu ||l - Wz||^2`` over the coefficient
    sequence; returns k x n."""
    if mu < 0:
        raise ValueError("mu must be nonnegative")
    diag, sub, b = supervised_normal_equations(T, X, z0, w, l, mu)
    if mu == 0:
        # the normal equations collapse to D z = rhs; solve that directly
        return solve_coefficients(build_recurrent_system(T, X, z0))
    if not (np.all(np.isfinite(diag)) and np.all(np.isfinite(b))):
        raise NumericalError("non-finite entries in the supervised coefficient system")
    try:
        Z = kernels.block_tridiag_solve(diag, sub, b)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(str(exc)) from exc
    return Z.T


def update_regression_weights(Z, l, mu: float, gamma: float) -> np.ndarray:
    """Ridge solution ``w = (mu Z Z^T + gamma I)^{-1} mu Z l``."""
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    l = np.asarray(l, dtype=float).reshape(-1)
    if l.shape[0] != Z.shape[1]:
        raise DimensionError(f"l has length {l.shape[0]} but Z has {Z.shape[1]} columns")
    k = Z.shape[0]
    if mu == 0:
        return np.zeros(k)
    A = mu * (Z @ Z.T) + gamma * np.eye(k)
    b = mu * (Z @ l)
    if gamma > 0:
        return linalg.solve(A, b, assume_a="pos")
    return linalg.lstsq(A, b)[0]


def _prepare(X, l, cfg):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    l = np.asarray(l, dtype=float).reshape(-1)
    d, n = X.shape
    if l.shape[0] != n:
        raise DimensionError(f"l has length {l.shape[0]} but X has {n} columns")
    if n < 2:
        raise InsufficientDataError(f"need at least 2 time-ordered samples, got {n}")
    norm = Normalization.fit(X, l, cfg.input_scaling) if cfg.normalize else Normalization.identity(d)
    return norm.inputs(X), norm.target(l), norm


def fit_r2tl(X, l, cfg: R2tlConfig) -> TrainedModel:
    """Jointly learn transform, coefficients and read-out weights.

    Cycle order: transform, coefficients, weights. Trace entry 0 is the
    objective at initialization (``T1`` from the SVD of X, ``T2 = 0``,
    ``Z = T1 X`` and ridge weights on that Z).
    """
    Xn, ln, norm = _prepare(X, l, cfg)
    d = Xn.shape[0]
    k = cfg.k
    T = np.hstack([svd_init(Xn, k), np.zeros((k, k))])
    z0 = np.zeros(k)
    # T2 = 0, so this is T1 X; computed as fit_rtl does for identical rounding
    Z = solve_coefficients(build_recurrent_system(T, Xn, z0))
    w = update_regression_weights(Z, ln, cfg.mu, cfg.gamma)

    def objective():
        return r2tl_objective(T, Xn, Z, z0, w, ln, cfg.mu, cfg.gamma, cfg.lam)

    trace = [objective()]
    for it in range(cfg.max_iters):
        T = transform_update_closed_form(
            stack_inputs(Xn, Z, z0), Z, cfg.lam, cfg.epsilon, warm_start=T, multistart=it == 0
        )
        Z = solve_coefficients_supervised(T, Xn, z0, w, ln, cfg.mu)
        w = update_regression_weights(Z, ln, cfg.mu, cfg.gamma)
        trace.append(objective())
        if relative_change(trace[-2], trace[-1]) < cfg.rel_tol:
            break
    # state carried into a contiguous test period is the test-time
    # (unsupervised) solve, not the target-informed training solve
    z_last = solve_coefficients(build_recurrent_system(T, Xn, z0))[:, -1]
    return TrainedModel("r2tl", T, w, z0, d, cfg, norm, tuple(trace), z_last)


def fit_rtl_regressor(X, l, cfg: R2tlConfig) -> TrainedModel:
    """Unsupervised RTL features followed by a ridge read-out (``mu``, ``gamma``)."""
    Xn, ln, norm = _prepare(X, l, cfg)
    rtl = fit_rtl(Xn, cfg.rtl())
    w = update_regression_weights(rtl.coefficients, ln, cfg.mu or 1.0, cfg.gamma)
    return TrainedModel(
        "rtl", rtl.transform, w, rtl.z0, rtl.input_dim, cfg, norm,
        rtl.objective_trace, rtl.coefficients[:, -1].copy(),
    )


def predict(model: TrainedModel, X_test, z0=None) -> np.ndarray:
    """One forecast per column of ``X_test``.

    Coefficients come from the unsupervised recurrence with the learnt
    transform; targets are never an input. ``z0`` may be an array or
    ``"carry"`` to continue from the end of the training sequence.
    """
    X_test = np.atleast_2d(np.asarray(X_test, dtype=float))
    if X_test.shape[0] != model.input_dim:
        raise DimensionError(
            f"X_test has {X_test.shape[0]} rows, model expects input_dim = {model.input_dim}"
        )
    if isinstance(z0, str):
        if z0 == "carry":
            if model.z_last is None:
                raise ValueError("model has no stored final training state")
            z0 = model.z_last
        elif z0 == "zero":
            z0 = None
        else:
            raise ValueError(f"unknown z0 policy {z0!r}")
    z0 = model.z0 if z0 is None else np.asarray(z0, dtype=float)
    Xn = model.normalization.inputs(X_test)
    Z = solve_coefficients(build_recurrent_system(model.transform, Xn, z0))
    return model.normalization.untarget(model.weights @ Z)
