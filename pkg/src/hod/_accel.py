"""Numba switch for the hot kernels.

Every kernel ships twice: a loop version compiled with ``numba.njit`` and a
vectorised numpy version. ``HOD_NUMBA=0`` selects the numpy path; so does a
missing numba install.
"""
import os

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

NUMBA_AVAILABLE = numba is not None
USE_NUMBA = NUMBA_AVAILABLE and os.environ.get("HOD_NUMBA", "1").lower() not in ("0", "false", "no", "off")


def njit(func):
    """Compile lazily with numba, or hand back the plain function."""
    if numba is None:
        return func
    return numba.njit(cache=True, nogil=True)(func)


def pick(numba_impl, numpy_impl):
    return numba_impl if USE_NUMBA else numpy_impl
