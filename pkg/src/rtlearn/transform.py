"""Static transform learning.

Solves

    min_{T,Z} ||TX - Z||_F^2 + lam * (||T||_F^2 - 0.5 * log det(T T^T)) + mu * ||Z||_1

by alternating a soft-threshold coefficient step with a closed-form
transform step. ``X`` holds features along rows and samples along columns;
``T`` is ``k x m`` with ``k <= m``.

The closed-form transform step (Cholesky of ``XX^T + lam*I``, SVD of
``L^{-1} X Z^T``) is the exact minimizer for square ``T``. For rectangular
``T`` it is a starting point that is refined to a stationary point of the
same objective (see :mod:`rtlearn._polish`).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from . import _polish
from .exceptions import DimensionError, NumericalError

__all__ = [
    "TlConfig",
    "TlResult",
    "tl_objective",
    "transform_penalty",
    "soft_threshold_update",
    "transform_update_closed_form",
    "fit_transform_learning",
    "svd_init",
]


@dataclass(frozen=True)
class TlConfig:
    """Hyperparameters for static transform learning.

    Parameters
    ----------
    lam : float
        Weight of the ``||T||_F^2 - 0.5 log det(TT^T)`` penalty. Must be > 0.
    mu_sparsity : float
        Weight of the l1 penalty on the coefficients; 0 disables it.
    epsilon : float
        Diagonal jitter (relative to ``trace(XX^T)/m``) used only when the
        Cholesky factorisation of ``XX^T + lam*I`` fails numerically.
    max_iters : int
    rel_tol : float
        Stop once the relative objective change drops below this.
    """

    lam: float = 0.1
    mu_sparsity: float = 0.0
    epsilon: float = 1e-3
    max_iters: int = 50
    rel_tol: float = 1e-6

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"lam must be > 0, got {self.lam}")
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")
        if self.mu_sparsity < 0:
            raise ValueError(f"mu_sparsity must be >= 0, got {self.mu_sparsity}")
        if self.max_iters < 1:
            raise ValueError("max_iters must be a positive integer")
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be > 0")


@dataclass
class TlResult:
    transform: np.ndarray
    coefficients: np.ndarray
    objective_trace: list = field(default_factory=list)

    @property
    def n_iters(self) -> int:
        return len(self.objective_trace) - 1


def _check_cols(a_name, a, b_name, b):
    if a.shape[1] != b.shape[1]:
        raise DimensionError(
            f"{a_name} has {a.shape[1]} columns but {b_name} has {b.shape[1]}"
        )


def transform_penalty(T: np.ndarray) -> float:
    """``||T||_F^2 - 0.5 * log det(T T^T)``; +inf if ``TT^T`` is singular."""
    T = np.asarray(T, dtype=float)
    try:
        c = linalg.cholesky(T @ T.T, lower=True)
    except linalg.LinAlgError:
        return np.inf
    d = np.diag(c)
    if np.any(d <= 0) or not np.all(np.isfinite(d)):
        return np.inf
    return float(np.sum(T * T) - np.sum(np.log(d)))


def tl_objective(T, X, Z, cfg: TlConfig | None = None, *, lam=None, mu=None) -> float:
    """Transform-learning objective.

    ``lam`` and ``mu`` override the values in ``cfg`` (handy for the bare
    ``lam`` / ``mu`` scalars used by the recurrent variants).
    """
    T = np.atleast_2d(np.asarray(T, dtype=float))
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    if lam is None:
        lam = cfg.lam if cfg is not None else 0.0
    if mu is None:
        mu = cfg.mu_sparsity if cfg is not None else 0.0
    if T.shape[1] != X.shape[0]:
        raise DimensionError(f"T has {T.shape[1]} columns but X has {X.shape[0]} rows")
    _check_cols("X", X, "Z", Z)
    if Z.shape[0] != T.shape[0]:
        raise DimensionError(f"Z has {Z.shape[0]} rows but T has {T.shape[0]}")
    pen = transform_penalty(T)
    if not np.isfinite(pen):
        return np.inf
    fit = float(np.sum((T @ X - Z) ** 2))
    return fit + lam * pen + mu * float(np.sum(np.abs(Z)))


def soft_threshold_update(T, X, mu: float) -> np.ndarray:
    """Element-wise shrinkage ``sign(TX) * max(0, |TX| - mu)``.

    This is the exact minimizer of ``||TX - Z||_F^2 + 2*mu*||Z||_1``; the
    alternating fit therefore calls it with ``mu_sparsity / 2``.
    """
    T = np.atleast_2d(np.asarray(T, dtype=float))
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if T.shape[1] != X.shape[0]:
        raise DimensionError(f"T has {T.shape[1]} columns but X has {X.shape[0]} rows")
    if mu < 0:
        raise ValueError("mu must be nonnegative")
    TX = T @ X
    if mu == 0:
        return TX
    return np.sign(TX) * np.maximum(0.0, np.abs(TX) - mu)


def svd_init(X: np.ndarray, k: int) -> np.ndarray:
    """Top-``k`` left singular vectors of ``X``, transposed (``k x m``)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    m = X.shape[0]
    if k > m:
        raise DimensionError(f"k={k} exceeds input dimension m={m}")
    U, _, _ = linalg.svd(X, full_matrices=True)
    return np.ascontiguousarray(U[:, :k].T)


def _gram_cholesky(G, lam, epsilon):
    m = G.shape[0]
    A = G + lam * np.eye(m)
    try:
        return linalg.cholesky(A, lower=True)
    except linalg.LinAlgError:
        pass
    if not np.all(np.isfinite(A)):
        raise NumericalError("non-finite entries in X X^T")
    jitter = epsilon * max(np.trace(A) / m, 1.0)
    try:
        return linalg.cholesky(A + jitter * np.eye(m), lower=True)
    except linalg.LinAlgError as exc:
        raise NumericalError(f"Cholesky of XX^T + lam*I failed: {exc}") from exc


def _closed_form(X, Z, lam, epsilon):
    G = X @ X.T
    L = _gram_cholesky(G, lam, epsilon)
    C = linalg.solve_triangular(L, X @ Z.T, lower=True)  # L^{-1} X Z^T, m x k
    U, s, Vt = linalg.svd(C, full_matrices=False)
    scale = 0.5 * (s + np.sqrt(s * s + 2.0 * lam))
    # T = V diag(scale) U^T L^{-1}  ->  T^T = L^{-T} U diag(scale) V^T
    Tt = linalg.solve_triangular(L, U * scale, lower=True, trans="T") @ Vt
    return np.ascontiguousarray(Tt.T)


def _gradient(T, X, Z, lam):
    R = T @ X - Z
    return 2.0 * R @ X.T + lam * (2.0 * T - linalg.solve(T @ T.T, T, assume_a="pos"))


def transform_update_closed_form(
    X,
    Z,
    lam: float,
    epsilon: float = 1e-3,
    *,
    warm_start=None,
    gtol: float = 1e-10,
    polish: bool = True,
    multistart: bool = True,
) -> np.ndarray:
    """Minimize ``||TX - Z||_F^2 + lam*(||T||_F^2 - 0.5 log det TT^T)`` over T.

    Parameters
    ----------
    X : ndarray, shape (m, n)
    Z : ndarray, shape (k, n)
    lam : float
        Must be > 0 (``lam = 0`` is accepted only when ``XX^T`` is positive
        definite).
    epsilon : float
        Cholesky fallback jitter; see :class:`TlConfig`.
    warm_start : ndarray, optional
        Current transform. When given, the returned transform never has a
        larger objective than it, which makes alternating schemes monotone.
    gtol : float
        Gradient tolerance (max-abs) that decides whether the closed form is
        already stationary, and the target of the polish otherwise.
    polish : bool
        Disable to get the raw closed-form expression.
    multistart : bool
        When T is rectangular and the sub-problem is non-convex, also polish
        from several candidate row spaces and keep the best local minimum.
        Alternating fits switch this off after their first iteration and
        follow the warm start instead.

    Returns
    -------
    T : ndarray, shape (k, m)
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    _check_cols("X", X, "Z", Z)
    k, m = Z.shape[0], X.shape[0]
    if k > m:
        raise DimensionError(f"number of basis rows k={k} exceeds input dimension m={m}")
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Z))):
        raise NumericalError("non-finite entries in X or Z")

    T = _closed_form(X, Z, lam, epsilon)
    if not polish or lam == 0:
        return T

    def f(T):
        return tl_objective(T, X, Z, lam=lam, mu=0.0)

    scale = max(1.0, float(np.abs(X @ X.T).max()), float(np.abs(Z @ X.T).max()))
    tol = gtol * scale
    start, f_start = T, f(T)
    if warm_start is not None:
        W = np.asarray(warm_start, dtype=float)
        if W.shape != T.shape:
            raise DimensionError(f"warm_start has shape {W.shape}, expected {T.shape}")
        f_warm = f(W)
        if f_warm < f_start:
            start, f_start = W, f_warm
    svd = _polish.complement_rank(X, k)
    # stationarity certifies the global minimum only when T is square or the
    # problem is in the reduced (convex) regime
    if (k == m or svd is not None) and np.abs(_gradient(start, X, Z, lam)).max() <= tol:
        return start
    if svd is not None:
        out = _polish.solve_reduced(X, Z, lam, start, tol, svd)
    else:
        L = _gram_cholesky(X @ X.T, lam, epsilon)
        solve = _polish.solve_general if multistart else _polish.solve_whitened
        out = solve(X, Z, lam, L, start, tol)
    if not f(out) <= f_start:
        return start
    return np.ascontiguousarray(out)


def fit_transform_learning(X, k: int, cfg: TlConfig | None = None) -> TlResult:
    """Alternate the coefficient step and the transform step.

    The first trace entry is the objective at initialization (SVD rows of
    ``X`` and their soft-thresholded coefficients). The coefficient step
    thresholds at ``mu_sparsity / 2`` so both steps are exact minimizations
    and the trace is non-increasing.
    """
    cfg = cfg or TlConfig()
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] < 1:
        raise DimensionError("X needs at least one column")
    T = svd_init(X, k)
    thresh = 0.5 * cfg.mu_sparsity
    Z = soft_threshold_update(T, X, thresh)
    trace = [tl_objective(T, X, Z, cfg)]
    for it in range(cfg.max_iters):
        T = transform_update_closed_form(X, Z, cfg.lam, cfg.epsilon, warm_start=T, multistart=it == 0)
        Z = soft_threshold_update(T, X, thresh)
        trace.append(tl_objective(T, X, Z, cfg))
        prev, cur = trace[-2], trace[-1]
        if abs(prev - cur) <= cfg.rel_tol * max(abs(prev), np.finfo(float).tiny):
            break
    return TlResult(T, Z, trace)
