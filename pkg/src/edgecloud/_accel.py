"""Numba detection.

Set ``EDGECLOUD_NO_NUMBA=1`` to force the pure-numpy kernels even when numba
is importable.
"""

from __future__ import annotations

import os

_DISABLED = os.environ.get("EDGECLOUD_NO_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}

try:
    if _DISABLED:
        raise ImportError("numba disabled by EDGECLOUD_NO_NUMBA")
    from numba import njit

    HAS_NUMBA = True
except ImportError:
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]

        def wrap(fn):
            return fn

        return wrap


BACKEND = "numba" if HAS_NUMBA else "numpy"
