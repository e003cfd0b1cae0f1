"""Pure-Python reference kernels.

Same contracts as the compiled ``_kernels`` extension; used when the
extension is unavailable or ``RTLEARN_PURE_PYTHON=1`` is set.
"""
import numpy as np
from scipy import linalg


def forward_recursion(R, T2, z0):
    """Solve ``z_i = R_i + T2 @ z_{i-1}`` for i = 0..n-1 with ``z_{-1} = z0``.

    ``R`` has one row per step, shape (n, k). Returns an (n, k) array.
    """
    R = np.ascontiguousarray(R, dtype=float)
    T2 = np.ascontiguousarray(T2, dtype=float)
    n, k = R.shape
    Z = np.empty((n, k))
    prev = np.asarray(z0, dtype=float)
    for i in range(n):
        prev = R[i] + T2 @ prev
        Z[i] = prev
    return Z


def block_tridiag_solve(diag, sub, rhs):
    """Solve a symmetric positive-definite block-tridiagonal system.

    Parameters
    ----------
    diag : (n, k, k) symmetric diagonal blocks
    sub : (k, k) constant sub-diagonal block, ``A[i+1, i] = sub``
    rhs : (n, k)
    """
    diag = np.asarray(diag, dtype=float)
    sub = np.asarray(sub, dtype=float)
    n, k = rhs.shape
    Ld = np.empty((n, k, k))
    Ls = np.empty((max(n - 1, 0), k, k))
    try:
        Ld[0] = linalg.cholesky(diag[0], lower=True)
        for i in range(n - 1):
            # Ls_i = sub @ Ld_i^{-T}
            Ls[i] = linalg.solve_triangular(Ld[i], sub.T, lower=True).T
            Ld[i + 1] = linalg.cholesky(diag[i + 1] - Ls[i] @ Ls[i].T, lower=True)
    except linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"block system is not positive definite: {exc}") from exc

    y = np.array(rhs, dtype=float)
    y[0] = linalg.solve_triangular(Ld[0], y[0], lower=True)
    for i in range(n - 1):
        y[i + 1] = linalg.solve_triangular(Ld[i + 1], y[i + 1] - Ls[i] @ y[i], lower=True)
    y[n - 1] = linalg.solve_triangular(Ld[n - 1], y[n - 1], lower=True, trans="T")
    for i in range(n - 2, -1, -1):
        y[i] = linalg.solve_triangular(Ld[i], y[i] - Ls[i].T @ y[i + 1], lower=True, trans="T")
    return y
