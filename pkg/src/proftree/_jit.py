"""Numba switch.

Set ``PROFTREE_NO_JIT=1`` to run every kernel through its pure-numpy path,
which is handy for debugging inside the interpreter and for benchmarking.
"""

import os

_disabled = os.environ.get("PROFTREE_NO_JIT", "").strip().lower() in {"1", "true", "yes", "on"}

try:
    import numba as _numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    _numba = None

JIT_AVAILABLE = _numba is not None
JIT_ENABLED = JIT_AVAILABLE and not _disabled


def njit(func=None, **kwargs):
    """``numba.njit`` when numba is importable, identity otherwise.

    The decorator is applied regardless of ``PROFTREE_NO_JIT`` so that the
    benchmark can time both paths in one process; the flag only controls
    which path the public dispatchers pick.
    """
    if not JIT_AVAILABLE:
        if func is not None:
            return func
        return lambda f: f
    kwargs.setdefault("cache", True)
    kwargs.setdefault("nogil", True)
    if func is not None:
        return _numba.njit(**kwargs)(func)
    return _numba.njit(**kwargs)
