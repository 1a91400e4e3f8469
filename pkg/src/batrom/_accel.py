"""Optional numba acceleration.

Set ``BATROM_NUMBA=0`` in the environment to force the pure-numpy kernels.
"""
import os

try:
    import numba as _numba
except ImportError:  # pragma: no cover - depends on the environment
    _numba = None

USE_NUMBA = _numba is not None and os.environ.get("BATROM_NUMBA", "1") not in ("0", "false", "no")


def njit(func):
    """Compile ``func`` in nopython mode with caching, or return it untouched."""
    if _numba is None:
        return func
    return _numba.njit(cache=True)(func)
