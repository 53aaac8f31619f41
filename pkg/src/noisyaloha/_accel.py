"""Optional numba acceleration for the hot loops.

Kernels are written once, in the numba-compatible subset of Python, and
decorated with :func:`jit`.  When numba is importable and the environment
variable ``NOISYALOHA_DISABLE_NUMBA`` is unset (or ``0``), they are compiled
with ``numba.njit``; otherwise they run as ordinary Python over numpy arrays.
Both paths consume identical pre-drawn random inputs, so their outputs are
bit-identical.
"""
from __future__ import annotations

import os

DISABLE_ENV = "NOISYALOHA_DISABLE_NUMBA"


def _numba_requested() -> bool:
    return os.environ.get(DISABLE_ENV, "0").strip().lower() in ("", "0", "false", "no")


try:
    if not _numba_requested():
        raise ImportError("numba disabled by " + DISABLE_ENV)
    import numba

    HAS_NUMBA = True
except ImportError:
    numba = None
    HAS_NUMBA = False


def jit(func):
    """``numba.njit(cache=True, nogil=True)`` when enabled, identity otherwise.

    The undecorated function is kept on ``.py_func`` in both cases so the
    benchmark can time the interpreted path without touching the environment.
    """
    if HAS_NUMBA:
        return numba.njit(cache=True, nogil=True)(func)
    func.py_func = func
    return func


def backend() -> str:
    return "numba" if HAS_NUMBA else "python"
