"""Optional numba acceleration.

Hot kernels are written once in a numba-compatible subset of Python and a
vectorized numpy twin. ``CRITSCORE_NUMBA=0`` forces the numpy path even when
numba is importable.
"""

import os

_FLAG = os.environ.get("CRITSCORE_NUMBA", "1").strip().lower()

try:
    import numba

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None
    NUMBA_AVAILABLE = False

USE_NUMBA = NUMBA_AVAILABLE and _FLAG not in ("0", "false", "no", "off")


def njit(func):
    """``numba.njit(cache=True)`` when enabled, identity otherwise."""
    if USE_NUMBA:
        return numba.njit(cache=True, nogil=True)(func)
    return func


def thread_count(requested=None):
    """Worker count: explicit request, else ``CRITSCORE_THREADS``, else 1."""
    if requested is None:
        env = os.environ.get("CRITSCORE_THREADS")
        requested = int(env) if env else 1
    return max(1, int(requested))
