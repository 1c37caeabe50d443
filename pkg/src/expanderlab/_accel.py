"""Optional numba acceleration.

Set ``EXPANDERLAB_NO_NUMBA=1`` to run every kernel as plain Python/numpy.
The kernels are written in the numba-compatible subset, so both paths
execute the same source.
"""
import os

DISABLED = os.environ.get("EXPANDERLAB_NO_NUMBA", "").strip() not in ("", "0", "false", "no")

try:
    if DISABLED:
        raise ImportError
    from numba import njit as _njit

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False
    _njit = None


def njit(*args, **kwargs):
    """``numba.njit`` when available and enabled, otherwise a no-op."""
    if HAVE_NUMBA:
        kwargs.setdefault("cache", True)
        return _njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda f: f


def backend() -> str:
    return "numba" if HAVE_NUMBA else "python"
