"""Backend selection for the recurrence kernels.

The compiled extension is preferred; set ``RTLEARN_PURE_PYTHON=1`` to force
the reference implementation.
"""
import os

from . import _kernels_py

BACKEND = "python"
forward_recursion = _kernels_py.forward_recursion
block_tridiag_solve = _kernels_py.block_tridiag_solve

if os.environ.get("RTLEARN_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _ext
    except ImportError:
        pass
    else:
        BACKEND = "cython"
        forward_recursion = _ext.forward_recursion
        block_tridiag_solve = _ext.block_tridiag_solve

__all__ = ["BACKEND", "forward_recursion", "block_tridiag_solve"]
