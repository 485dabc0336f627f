"""Optional numba acceleration.

Set ``TKSMOOTH_DISABLE_NUMBA=1`` to force the pure-numpy kernels. When numba
is not importable the numpy kernels are used regardless of the flag.
"""
import os

_FLAG = os.environ.get("TKSMOOTH_DISABLE_NUMBA", "").strip().lower()

try:
    from numba import njit as _njit
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _njit = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and _FLAG not in ("1", "true", "yes", "on")


def njit(func):
    """``numba.njit(cache=True)`` when numba is available, identity otherwise."""
    if not HAVE_NUMBA:
        return func
    return _njit(cache=True)(func)
