"""Backend selection for the hot kernels.

Set ``GTRIE_BACKEND=numpy`` to bypass numba; every kernel then runs either as a
vectorized numpy routine or as its plain-Python loop body.
"""
import os

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

BACKEND = os.environ.get("GTRIE_BACKEND", "numba").strip().lower()
if BACKEND not in ("numba", "numpy"):
    raise ImportError(f"GTRIE_BACKEND must be 'numba' or 'numpy', got {BACKEND!r}")

USE_NUMBA = BACKEND == "numba" and numba is not None


def njit(func):
    """Compile ``func`` with numba when enabled; otherwise return it untouched.

    The original function is always reachable as ``.py_func`` so tests and the
    benchmark can run both paths side by side.
    """
    if USE_NUMBA:
        return numba.njit(cache=True, nogil=True)(func)
    func.py_func = func
    return func


def pick(numba_impl, numpy_impl):
    return numba_impl if USE_NUMBA else numpy_impl
