"""Optional numba acceleration.

Hot kernels come in two flavours: a plain-loop version compiled with
``numba.njit`` and a vectorized pure-numpy fallback.  Which one the package
uses is decided once at import time:

* numba missing        -> numpy fallback
* LIDARMAPS_NO_NUMBA=1 -> numpy fallback (forced, e.g. for benchmarking)
* otherwise            -> compiled kernels
"""

import os

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - depends on environment
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        """Stand-in decorator so kernel sources stay importable."""

        def wrap(func):
            return func

        if args and callable(args[0]):
            return args[0]
        return wrap


def _flag_set(name: str) -> bool:
    return os.environ.get(name, "").strip().lower() in ("1", "true", "yes", "on")


#: True when the compiled kernel path is active for this process.
USE_NUMBA = HAS_NUMBA and not _flag_set("LIDARMAPS_NO_NUMBA")


def using_numba() -> bool:
    """Report which kernel path the package selected at import."""
    return USE_NUMBA
