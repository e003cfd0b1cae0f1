"""Unsupervised recurrent transform learning (RTL).

The model is ``T [x_t; z_{t-1}] = z_t`` with ``T = [T1 | T2]``, ``T1`` acting
on the ``d`` input features and ``T2`` feeding back the previous
representation. Training alternates the transform step on the stacked data
``[X; Z_shifted]`` with an exact solve for the coefficient sequence.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .exceptions import DimensionError, InsufficientDataError, NumericalError
from .transform import svd_init, transform_penalty, transform_update_closed_form

__all__ = [
    "RtlConfig",
    "RtlModel",
    "RecurrentSystem",
    "build_recurrent_system",
    "solve_coefficients",
    "stack_inputs",
    "rtl_objective",
    "fit_rtl",
    "infer_coefficients",
    "relative_change",
]


@dataclass(frozen=True)
class RtlConfig:
    """Hyperparameters for :func:`fit_rtl`.

    ``learn_feedback=False`` freezes ``T2`` at zero, which reduces the model
    to plain (non-sparse) transform learning.
    """

    k: int
    lam: float = 0.1
    epsilon: float = 1e-3
    max_iters: int = 20
    rel_tol: float = 1e-4
    learn_feedback: bool = True

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be a positive integer, got {self.k}")
        if not self.lam > 0:
            raise ValueError(f"lam must be > 0, got {self.lam}")
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")
        if self.max_iters < 1:
            raise ValueError("max_iters must be a positive integer")
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be > 0")


@dataclass(frozen=True)
class RtlModel:
    transform: np.ndarray
    z0: np.ndarray
    input_dim: int
    config: RtlConfig
    objective_trace: tuple = ()
    coefficients: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        k = self.transform.shape[0]
        if self.transform.shape[1] != self.input_dim + k:
            raise DimensionError(
                f"transform has {self.transform.shape[1]} columns, expected input_dim + k = {self.input_dim + k}"
            )
        if not np.all(np.isfinite(self.z0)):
            raise NumericalError("z0 must be finite")

    @property
    def k(self) -> int:
        return self.transform.shape[0]

    @property
    def T1(self) -> np.ndarray:
        return self.transform[:, : self.input_dim]

    @property
    def T2(self) -> np.ndarray:
        return self.transform[:, self.input_dim:]

    @property
    def n_iters(self) -> int:
        return len(self.objective_trace) - 1


@dataclass(frozen=True)
class RecurrentSystem:
    """Block lower-bidiagonal system ``D z = rhs``.

    ``D`` has identity diagonal blocks and ``-T2`` on the first block
    sub-diagonal. It is kept implicit; :meth:`dense` materializes it.
    ``rhs`` has one row per time step (``T1 x_i``, plus ``T2 z0`` on the
    first row).
    """

    feedback: np.ndarray
    rhs: np.ndarray

    @property
    def k(self) -> int:
        return self.feedback.shape[0]

    @property
    def n(self) -> int:
        return self.rhs.shape[0]

    def dense(self) -> np.ndarray:
        k, n = self.k, self.n
        D = np.eye(k * n)
        for i in range(1, n):
            D[i * k:(i + 1) * k, (i - 1) * k:i * k] = -self.feedback
        return D

    def matvec(self, z: np.ndarray) -> np.ndarray:
        """Apply ``D`` to a (n, k) or stacked (n*k,) coefficient array."""
        Zr = np.asarray(z, dtype=float).reshape(self.n, self.k)
        out = Zr.copy()
        out[1:] -= Zr[:-1] @ self.feedback.T
        return out.reshape(np.shape(z))


def _split(T, d):
    T = np.atleast_2d(np.asarray(T, dtype=float))
    k = T.shape[0]
    if T.shape[1] != d + k:
        raise DimensionError(f"transform has {T.shape[1]} columns, expected d + k = {d + k}")
    return T[:, :d], T[:, d:]


def build_recurrent_system(T, X, z0) -> RecurrentSystem:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    d, n = X.shape
    if n < 1:
        raise DimensionError("X needs at least one column")
    T1, T2 = _split(T, d)
    z0 = np.asarray(z0, dtype=float).reshape(-1)
    if z0.shape[0] != T1.shape[0]:
        raise DimensionError(f"z0 has length {z0.shape[0]}, expected k = {T1.shape[0]}")
    rhs = (T1 @ X).T.copy()
    rhs[0] += T2 @ z0
    return RecurrentSystem(np.ascontiguousarray(T2), rhs)


def solve_coefficients(sys: RecurrentSystem) -> np.ndarray:
    """Exact solution of ``D z = rhs`` by block forward substitution.

    Returns the coefficient matrix with one column per time step (k x n).
    """
    if not (np.all(np.isfinite(sys.rhs)) and np.all(np.isfinite(sys.feedback))):
        raise NumericalError("non-finite entries in the recurrent system")
    Z = kernels.forward_recursion(sys.rhs, sys.feedback, np.zeros(sys.k))
    return Z.T


def stack_inputs(X, Z, z0) -> np.ndarray:
    """``[X; Z_shifted]`` where column i of ``Z_shifted`` is ``z_{i-1}``."""
    Zs = np.empty_like(Z)
    Zs[:, 0] = z0
    Zs[:, 1:] = Z[:, :-1]
    return np.vstack([X, Zs])


def rtl_objective(T, X, Z, z0, lam: float) -> float:
    """``sum_i ||T [x_i; z_{i-1}] - z_i||^2 + lam * (||T||^2 - 0.5 log det TT^T)``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    if X.shape[1] != Z.shape[1]:
        raise DimensionError(f"X has {X.shape[1]} columns but Z has {Z.shape[1]}")
    _split(T, X.shape[0])
    pen = transform_penalty(T)
    if not np.isfinite(pen):
        return np.inf
    resid = np.asarray(T) @ stack_inputs(X, Z, z0) - Z
    return float(np.sum(resid * resid)) + lam * pen


def relative_change(prev: float, cur: float) -> float:
    return abs(prev - cur) / max(abs(prev), np.finfo(float).tiny)


def _transform_step(X, Z, z0, T, lam, epsilon, learn_feedback, multistart):
    d = X.shape[0]
    if learn_feedback:
        return transform_update_closed_form(
            stack_inputs(X, Z, z0), Z, lam, epsilon, warm_start=T, multistart=multistart
        )
    T1 = transform_update_closed_form(X, Z, lam, epsilon, warm_start=T[:, :d], multistart=multistart)
    return np.hstack([T1, np.zeros((T.shape[0], T.shape[0]))])


def fit_rtl(X, cfg: RtlConfig) -> RtlModel:
    """Fit RTL on a d x n input matrix whose columns are ordered by time.

    Initialization takes ``T1`` from the top-k left singular vectors of ``X``
    with ``T2 = 0`` and ``z0 = 0``. The first trace entry is the objective at
    that initialization.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    d, n = X.shape
    if n < 2:
        raise InsufficientDataError(f"need at least 2 time-ordered samples, got {n}")
    k = cfg.k
    T = np.hstack([svd_init(X, k), np.zeros((k, k))])
    z0 = np.zeros(k)
    Z = solve_coefficients(build_recurrent_system(T, X, z0))
    trace = [rtl_objective(T, X, Z, z0, cfg.lam)]
    for it in range(cfg.max_iters):
        T = _transform_step(X, Z, z0, T, cfg.lam, cfg.epsilon, cfg.learn_feedback, it == 0)
        Z = solve_coefficients(build_recurrent_system(T, X, z0))
        trace.append(rtl_objective(T, X, Z, z0, cfg.lam))
        if relative_change(trace[-2], trace[-1]) < cfg.rel_tol:
            break
    return RtlModel(T, z0, d, cfg, tuple(trace), Z)


def infer_coefficients(model: RtlModel, X_test, z0=None) -> np.ndarray:
    """Coefficients for new inputs with the transform held fixed.

    ``z0`` defaults to the model's initial state (zeros); pass the last
    training coefficient column to continue a contiguous sequence.
    """
    X_test = np.atleast_2d(np.asarray(X_test, dtype=float))
    if X_test.shape[0] != model.input_dim:
        raise DimensionError(
            f"X_test has {X_test.shape[0]} rows, model expects input_dim = {model.input_dim}"
        )
    z0 = model.z0 if z0 is None else np.asarray(z0, dtype=float)
    return solve_coefficients(build_recurrent_system(model.transform, X_test, z0))
