"""Compiled kernels agree with the pure-Python reference."""
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rtlearn import _kernels_py, kernels

try:
    from rtlearn import _kernels
except ImportError:  # extension not built
    _kernels = None

backends = [pytest.param(_kernels_py, id="python")]
backends.append(pytest.param(_kernels, id="cython", marks=pytest.mark.skipif(_kernels is None, reason="not built")))


def spd_blocks(rng, n, k):
    sub = 0.4 * rng.standard_normal((k, k))
    diag = np.empty((n, k, k))
    for i in range(n):
        A = rng.standard_normal((k, k))
        diag[i] = A @ A.T + (k + 2.0) * np.eye(k)
    return diag, sub


def dense_tridiag(diag, sub):
    n, k, _ = diag.shape
    A = np.zeros((n * k, n * k))
    for i in range(n):
        A[i * k:(i + 1) * k, i * k:(i + 1) * k] = diag[i]
        if i:
            A[i * k:(i + 1) * k, (i - 1) * k:i * k] = sub
            A[(i - 1) * k:i * k, i * k:(i + 1) * k] = sub.T
    return A


@pytest.mark.parametrize("mod", backends)
class TestBackends:
    def test_forward_recursion(self, mod, rng):
        R = rng.standard_normal((9, 3))
        T2 = 0.5 * rng.standard_normal((3, 3))
        z0 = rng.standard_normal(3)
        Z = mod.forward_recursion(R, T2, z0)
        prev = z0
        for i in range(9):
            prev = R[i] + T2 @ prev
            assert np.abs(Z[i] - prev).max() < 1e-13

    def test_block_tridiag(self, mod, rng):
        diag, sub = spd_blocks(rng, 7, 3)
        rhs = rng.standard_normal((7, 3))
        y = mod.block_tridiag_solve(diag, sub, rhs)
        ref = np.linalg.solve(dense_tridiag(diag, sub), rhs.ravel())
        assert np.abs(y.ravel() - ref).max() < 1e-10

    def test_not_positive_definite(self, mod):
        diag = np.stack([np.eye(2), -np.eye(2)])
        with pytest.raises(np.linalg.LinAlgError):
            mod.block_tridiag_solve(diag, np.zeros((2, 2)), np.ones((2, 2)))

    def test_single_block(self, mod, rng):
        diag, sub = spd_blocks(rng, 1, 4)
        rhs = rng.standard_normal((1, 4))
        np.testing.assert_allclose(mod.block_tridiag_solve(diag, sub, rhs)[0], np.linalg.solve(diag[0], rhs[0]), atol=1e-12)


@pytest.mark.skipif(_kernels is None, reason="extension not built")
@settings(max_examples=40, deadline=None)
@given(st.integers(1, 40), st.integers(1, 6), st.integers(0, 10_000))
def test_backends_agree(n, k, seed):
    rng = np.random.default_rng(seed)
    R = rng.standard_normal((n, k))
    T2 = 0.5 * rng.standard_normal((k, k)) / np.sqrt(k)
    z0 = rng.standard_normal(k)
    assert np.abs(_kernels.forward_recursion(R, T2, z0) - _kernels_py.forward_recursion(R, T2, z0)).max() < 1e-12
    diag, sub = spd_blocks(rng, n, k)
    a = _kernels.block_tridiag_solve(diag, sub, R)
    b = _kernels_py.block_tridiag_solve(diag, sub, R)
    assert np.abs(a - b).max() < 1e-10


def test_backend_flag():
    assert kernels.BACKEND in ("cython", "python")
    if _kernels is not None:
        assert kernels.BACKEND == "cython"


def test_pure_python_env(monkeypatch):
    import importlib

    monkeypatch.setenv("RTLEARN_PURE_PYTHON", "1")
    try:
        mod = importlib.reload(kernels)
        assert mod.BACKEND == "python"
        assert mod.forward_recursion is _kernels_py.forward_recursion
    finally:
        monkeypatch.delenv("RTLEARN_PURE_PYTHON")
        importlib.reload(kernels)
