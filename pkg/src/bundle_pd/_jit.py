"""Numba switch for the hot kernels.

Set ``BUNDLE_PD_NUMBA=0`` to run every kernel as plain numpy code. The
choice is made once, at import time.
"""

import os

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

USE_NUMBA = numba is not None and os.environ.get("BUNDLE_PD_NUMBA", "1") != "0"

NUMBA_OPTS = {"cache": True, "fastmath": False}


def njit(func):
    if USE_NUMBA:
        return numba.njit(**NUMBA_OPTS)(func)
    return func


def python_version(func):
    """Return the uncompiled function behind a kernel."""
    return getattr(func, "py_func", func)
