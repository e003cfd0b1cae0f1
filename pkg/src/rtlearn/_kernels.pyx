# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled recurrence kernels.

Blocks are handed to BLAS/LAPACK in column-major layout. Symmetric input
blocks need no transposition; the sub-diagonal block is copied into
Fortran order once.
"""
import numpy as np
cimport numpy as cnp
from scipy.linalg.cython_blas cimport dcopy, dgemv, dsyrk, dtrsm, dtrsv
from scipy.linalg.cython_lapack cimport dpotrf

cnp.import_array()


def forward_recursion(R, T2, z0):
    cdef double[:, ::1] r = np.ascontiguousarray(R, dtype=np.float64)
    cdef double[:, ::1] t2 = np.ascontiguousarray(T2, dtype=np.float64)
    cdef double[::1] z_init = np.ascontiguousarray(z0, dtype=np.float64)
    cdef int n = r.shape[0]
    cdef int k = r.shape[1]
    out = np.empty((n, k), dtype=np.float64)
    if n == 0 or k == 0:
        return out
    cdef double[:, ::1] z = out
    cdef int one = 1
    cdef double alpha = 1.0, beta = 1.0
    cdef char trans = b'T'  # C-order T2 is its own transpose to Fortran
    cdef int i
    with nogil:
        dcopy(&k, &r[0, 0], &one, &z[0, 0], &one)
        dgemv(&trans, &k, &k, &alpha, &t2[0, 0], &k, &z_init[0], &one, &beta, &z[0, 0], &one)
        for i in range(1, n):
            dcopy(&k, &r[i, 0], &one, &z[i, 0], &one)
            dgemv(&trans, &k, &k, &alpha, &t2[0, 0], &k, &z[i - 1, 0], &one, &beta, &z[i, 0], &one)
    return out


def block_tridiag_solve(diag, sub, rhs):
    cdef double[:, :, ::1] dg = np.ascontiguousarray(diag, dtype=np.float64)
    cdef double[::1, :] s = np.asfortranarray(sub, dtype=np.float64)
    cdef int n = dg.shape[0]
    cdef int k = dg.shape[1]
    out = np.array(rhs, dtype=np.float64, order='C', copy=True)
    if n == 0 or k == 0:
        return out
    cdef double[:, ::1] y = out
    # each [i, :, :] block is read as a column-major k x k matrix
    cdef double[:, :, ::1] ld = np.empty((n, k, k), dtype=np.float64)
    cdef double[:, :, ::1] ls = np.empty((max(n - 1, 1), k, k), dtype=np.float64)
    cdef int kk = k * k
    cdef int one = 1, info = 0, i, j
    cdef char lo = b'L', no = b'N', tr = b'T', right = b'R'
    cdef double p1 = 1.0, m1 = -1.0

    with nogil:
        dcopy(&kk, &dg[0, 0, 0], &one, &ld[0, 0, 0], &one)
        dpotrf(&lo, &k, &ld[0, 0, 0], &k, &info)
        if info == 0:
            for i in range(n - 1):
                # ls_i = sub * ld_i^{-T}
                for j in range(k):
                    dcopy(&k, &s[0, j], &one, &ls[i, j, 0], &one)
                dtrsm(&right, &lo, &tr, &no, &k, &k, &p1, &ld[i, 0, 0], &k, &ls[i, 0, 0], &k)
                dcopy(&kk, &dg[i + 1, 0, 0], &one, &ld[i + 1, 0, 0], &one)
                dsyrk(&lo, &no, &k, &k, &m1, &ls[i, 0, 0], &k, &p1, &ld[i + 1, 0, 0], &k)
                dpotrf(&lo, &k, &ld[i + 1, 0, 0], &k, &info)
                if info != 0:
                    break
    if info != 0:
        raise np.linalg.LinAlgError(
            f"block system is not positive definite (LAPACK info={info})")

    with nogil:
        dtrsv(&lo, &no, &no, &k, &ld[0, 0, 0], &k, &y[0, 0], &one)
        for i in range(n - 1):
            dgemv(&no, &k, &k, &m1, &ls[i, 0, 0], &k, &y[i, 0], &one, &p1, &y[i + 1, 0], &one)
            dtrsv(&lo, &no, &no, &k, &ld[i + 1, 0, 0], &k, &y[i + 1, 0], &one)
        dtrsv(&lo, &tr, &no, &k, &ld[n - 1, 0, 0], &k, &y[n - 1, 0], &one)
        for i in range(n - 2, -1, -1):
            dgemv(&tr, &k, &k, &m1, &ls[i, 0, 0], &k, &y[i + 1, 0], &one, &p1, &y[i, 0], &one)
            dtrsv(&lo, &tr, &no, &k, &ld[i, 0, 0], &k, &y[i, 0], &one)
    return out
