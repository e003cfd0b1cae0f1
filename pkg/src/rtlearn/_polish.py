"""Stationary points of the rectangular transform sub-problem.

    f(T) = ||TX - Z||_F^2 + lam * (||T||_F^2 - 0.5 log det TT^T)

The closed-form update is exact only for square ``T``. Two refinements
are used for the rectangular case.

Reduced (convex) regime, when the column space of ``X`` leaves a
complement of dimension ``>= k``. With ``Q`` an orthonormal basis of
``range(X)`` write ``T = C Q^T + E Q_c^T``. ``E`` enters only through
``N = E E^T`` and, for fixed ``C``, the best ``N`` is
``U diag(max(0.5 - kappa, 0)) U^T`` with ``C C^T = U diag(kappa) U^T``.
Eliminating ``N`` leaves

    g(C) = ||C Y - Z||^2 + lam * sum_i psi(kappa_i),
    psi(kappa) = kappa - 0.5 log kappa  (kappa >= 1/2), constant below,

which is convex in ``C`` and is minimized by semismooth Newton.

General regime: L-BFGS and Newton on ``f`` in whitened coordinates
``S = T L`` (``L L^T = XX^T + lam I``), where the data part of the Hessian
is exactly ``2 I``. Here ``f`` can have several local minima. With
``C = L^{-1} X Z^T`` and row space ``V`` of ``S``, the best ``S`` for a fixed
``V`` is explicit, and ``f`` trades capturing ``range(C)`` against aligning
``V`` with ``A^{-1} = (XX^T + lam I)^{-1}`` through the log-determinant. The
polish is therefore started from the top-k eigenspaces of
``CC^T / tr + alpha A^{-1} / tr`` over a grid of ``alpha`` and, for small
problems, from a few seeded random row spaces.
"""
from __future__ import annotations

import numpy as np
from scipy import linalg
from scipy.optimize import minimize
from scipy.sparse.linalg import LinearOperator, minres

_PSI_FLOOR = 0.5 - 0.5 * np.log(0.5)
_SMALL = 5000  # problems up to this many unknowns go straight to Newton
_ALPHAS = (0.0, 0.1, 0.3, 1.0, 3.0, 10.0, 100.0)
_RANDOM_STARTS = 8


def _psi(kap):
    k = np.maximum(kap, 0.5)
    return np.where(kap >= 0.5, k - 0.5 * np.log(k), _PSI_FLOOR)


def _dpsi(kap):
    return np.where(kap > 0.5, 1.0 - 0.5 / np.maximum(kap, 0.5), 0.0)


def _d2psi(kap):
    return np.where(kap > 0.5, 0.5 / np.maximum(kap, 0.5) ** 2, 0.0)


def _newton(x, evaluate, grad_coords, hessp, move, tol, floor, max_iter, cg_iter):
    """Line-searched Newton-MINRES in preconditioned coordinates.

    ``grad_coords(G, aux)`` maps the gradient into the step coordinates,
    ``hessp(x, aux, V)`` is the Hessian product there and
    ``move(x, aux, p, t)`` applies a step. ``aux`` is whatever ``evaluate``
    returned alongside the value and gradient at ``x``. Stops at ``tol`` (max-abs of the natural gradient), when
    the line search fails, or once a damped step is needed below ``floor``
    (the roundoff regime).
    """
    f, G, aux = evaluate(x)
    for _ in range(max_iter):
        gmax = np.abs(G).max()
        if gmax <= tol:
            break
        g = grad_coords(G, aux)
        shape, n = g.shape, g.size
        op = LinearOperator((n, n), matvec=lambda v: hessp(x, aux, v.reshape(shape)).ravel())
        # inexact Newton: solve loosely far from the solution
        rtol = float(np.clip(gmax, 1e-10, 1e-2))
        p, _ = minres(op, -g.ravel(), rtol=rtol, maxiter=cg_iter)
        p = p.reshape(shape)
        slope = float(np.sum(p * g))
        if not slope < 0:
            p, slope = -g, -float(np.sum(g * g))
        t = 1.0
        while t > 1e-12:
            xn = move(x, aux, p, t)
            fn, Gn, auxn = evaluate(xn)
            if fn <= f + 1e-4 * t * slope:
                break
            t *= 0.5
        else:
            break
        x, f, G, aux = xn, fn, Gn, auxn
        if t < 1 and gmax <= floor:
            break
    return x


class _Reduced:
    """``g(C)`` with ``Y = diag(s) P^T`` so that ``YY^T`` is diagonal.

    Newton steps are taken in the eigenbasis ``U`` of ``CC^T`` and scaled by
    the exact Hessian diagonal there.
    """

    def __init__(self, s, F, zz, lam):
        self.s2, self.F, self.zz, self.lam = s * s, F, zz, lam

    def evaluate(self, C):
        kap, U = linalg.eigh(C @ C.T)
        dp = _dpsi(kap)
        f = float(np.sum(C * C * self.s2) - 2.0 * np.sum(C * self.F) + self.zz + self.lam * np.sum(_psi(kap)))
        Cu = U.T @ C
        Gu = 2.0 * (Cu * self.s2 - U.T @ self.F) + 2.0 * self.lam * dp[:, None] * Cu
        dk = kap[:, None] - kap[None, :]
        same = np.abs(dk) <= 1e-12 * max(1.0, float(kap.max()))
        # divided differences of psi' (Daleckii-Krein)
        gam = np.where(
            same,
            _d2psi(np.maximum(kap[:, None], kap[None, :])),
            (dp[:, None] - dp[None, :]) / np.where(same, 1.0, dk),
        )
        diag = 2.0 * self.s2 + 2.0 * self.lam * (
            dp[:, None] + gam @ (Cu * Cu) + np.diag(gam)[:, None] * Cu * Cu
        )
        pre = 1.0 / np.sqrt(np.maximum(diag, 1e-12 * diag.max()))
        return f, U @ Gu, (U, Cu, Gu, dp, gam, pre)

    def grad_coords(self, G, aux):
        U, Cu, Gu, dp, gam, pre = aux
        return Gu * pre

    def hessp(self, C, aux, Y):
        U, Cu, Gu, dp, gam, pre = aux
        V = Y * pre
        H = V @ Cu.T
        H = H + H.T
        return (2.0 * V * self.s2 + 2.0 * self.lam * ((gam * H) @ Cu + dp[:, None] * V)) * pre

    def move(self, C, aux, Y, t):
        U, Cu, Gu, dp, gam, pre = aux
        return C + t * (U @ (Y * pre))


def complement_rank(X, k):
    """``(U, s, r)`` from the SVD of ``X`` if ``m - rank(X) >= k``, else None."""
    m, n = X.shape
    U, s, Vt = linalg.svd(X, full_matrices=True)
    if s.size == 0:
        return None
    r = int(np.sum(s > s[0] * max(m, n) * np.finfo(float).eps)) if s[0] > 0 else 0
    if m - r < k:
        return None
    return U, s[:r], Vt[:r], r


def solve_reduced(X, Z, lam, start, tol, svd):
    """Global minimizer in the reduced regime (``svd`` from :func:`complement_rank`)."""
    U, s, Pt, r = svd
    Q, Qc = U[:, :r], U[:, r:]
    k = Z.shape[0]
    obj = _Reduced(s, (Z @ Pt.T) * s, float(np.sum(Z * Z)), lam)
    C = _newton(
        start @ Q,
        obj.evaluate,
        obj.grad_coords,
        obj.hessp,
        obj.move,
        tol,
        1e-6 * max(1.0, tol * 1e10),
        max_iter=50,
        cg_iter=min(5 * k * max(r, 1), 500),
    )
    kap, V = linalg.eigh(C @ C.T)
    D = np.sqrt(np.maximum(0.5 - kap, 0.0))
    # complement rows: the orientation closest to the start's complement part
    M = (V * D).T @ (start @ Qc)
    M = M + 1e-8 * max(1.0, float(np.abs(M).max())) * D[:, None] * np.eye(k, Qc.shape[1])
    P, _, Wt = linalg.svd(M, full_matrices=False)
    E = (V * D) @ (P @ Wt)
    return C @ Q.T + E @ Qc.T


class _Whitened:
    """``f`` with steps taken in ``S = T L``."""

    def __init__(self, X, Z, lam, L):
        self.X, self.Z, self.lam, self.L = X, Z, lam, L

    def to_T(self, S):
        return linalg.solve_triangular(self.L, S.T, lower=True, trans="T").T

    def grad_S(self, G):
        return linalg.solve_triangular(self.L, G.T, lower=True).T

    def evaluate(self, T):
        try:
            c = linalg.cho_factor(T @ T.T, lower=True)
        except linalg.LinAlgError:
            return np.inf, None, None
        R = T @ self.X - self.Z
        logdet = 2.0 * float(np.sum(np.log(np.diag(c[0]))))
        f = float(np.sum(R * R)) + self.lam * (float(np.sum(T * T)) - 0.5 * logdet)
        MiT = linalg.cho_solve(c, T)
        G = 2.0 * R @ self.X.T + self.lam * (2.0 * T - MiT)
        return f, G, (c, MiT)

    def hessp(self, T, aux, V):
        c, MiT = aux
        VT = self.to_T(V)
        d = linalg.cho_solve(c, VT) - linalg.cho_solve(c, VT @ T.T + T @ VT.T) @ MiT
        return 2.0 * V - self.lam * self.grad_S(d)

    def move(self, T, p, t):
        return T + t * self.to_T(p)


def solve_whitened(X, Z, lam, L, start, tol, lbfgs_iter=500):
    obj = _Whitened(X, Z, lam, L)
    k, m = start.shape
    T = start
    if T.size > _SMALL:
        def fg(s):
            f, G, _ = obj.evaluate(obj.to_T(s.reshape(k, m)))
            if G is None:
                return np.inf, np.zeros_like(s)
            return f, obj.grad_S(G).ravel()

        res = minimize(
            fg, (T @ L).ravel(), jac=True, method="L-BFGS-B",
            options={"maxiter": lbfgs_iter, "gtol": tol, "ftol": 0.0, "maxcor": 30},
        )
        if np.isfinite(res.fun):
            T = obj.to_T(res.x.reshape(k, m))
    return _newton(
        T,
        obj.evaluate,
        lambda G, aux: obj.grad_S(G),
        obj.hessp,
        lambda T, aux, p, t: obj.move(T, p, t),
        tol,
        1e-6 * max(1.0, tol * 1e10),
        max_iter=30,
        cg_iter=min(5 * T.size, 500),
    )


def _best_for_rows(C, L, lam, V):
    """The best ``T`` whose whitened row space is ``range(V^T)``."""
    P, s, Qt = linalg.svd(C.T @ V.T)
    S = (P * (0.5 * (s + np.sqrt(s * s + 2.0 * lam)))) @ Qt @ V
    return linalg.solve_triangular(L, S.T, lower=True, trans="T").T


def subspace_starts(X, Z, lam, L, n_random=0):
    """Candidate transforms: one per ``alpha`` from the top-k eigenspace of
    ``CC^T/tr + alpha A^{-1}/tr``, then ``n_random`` seeded random row spaces."""
    k, m = Z.shape[0], X.shape[0]
    C = linalg.solve_triangular(L, X @ Z.T, lower=True)
    Li = linalg.solve_triangular(L, np.eye(m), lower=True)
    ainv = Li.T @ Li
    cc = C @ C.T
    cc = cc / max(float(np.trace(cc)), np.finfo(float).tiny)
    ainv = ainv / float(np.trace(ainv))
    rows = [linalg.eigh(cc + alpha * ainv)[1][:, -k:].T for alpha in _ALPHAS]
    rng = np.random.default_rng(0)
    rows += [linalg.qr(rng.standard_normal((m, k)), mode="economic")[0].T for _ in range(n_random)]
    return [_best_for_rows(C, L, lam, V) for V in rows]


def solve_general(X, Z, lam, L, start, tol):
    """Best local minimum over ``start`` and :func:`subspace_starts`.

    Small problems polish every candidate, including random row spaces;
    larger ones polish ``start`` and the candidate with the lowest initial
    objective.
    """
    obj = _Whitened(X, Z, lam, L)
    small = start.size <= _SMALL
    cands = subspace_starts(X, Z, lam, L, n_random=_RANDOM_STARTS if small else 0)
    if not small:
        vals = [obj.evaluate(T)[0] for T in cands]
        cands = [cands[int(np.argmin(vals))]]
    best, f_best = None, np.inf
    for T0 in [start] + cands:
        T = solve_whitened(X, Z, lam, L, T0, tol)
        f = obj.evaluate(T)[0]
        if f < f_best:
            best, f_best = T, f
    return best
