"""JIT switch for the hot kernels.

Set ``SEALEG_DISABLE_JIT=1`` to run every kernel as plain Python/numpy.
The two paths share source, so results agree to floating-point roundoff.
"""
import os

DISABLE_JIT = os.environ.get("SEALEG_DISABLE_JIT", "0").lower() in ("1", "true", "yes")

try:
    if DISABLE_JIT:
        raise ImportError
    from numba import njit as _njit

    USING_NUMBA = True
except ImportError:
    _njit = None
    USING_NUMBA = False


def njit(fn=None, **kwargs):
    """``numba.njit(cache=True)`` or identity, depending on the env flag."""
    if fn is None:
        return lambda f: njit(f, **kwargs)
    if not USING_NUMBA:
        return fn
    kwargs.setdefault("cache", True)
    return _njit(**kwargs)(fn)
