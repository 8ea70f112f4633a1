"""Numba availability and backend selection.

The hot kernels in :mod:`specmix.kernels` exist twice: a numba ``@njit``
version and a pure-numpy twin. Set ``SPECMIX_BACKEND=numpy`` to force the
numpy path (useful for debugging and for the benchmark comparison).
"""

import os

BACKEND_ENV = "SPECMIX_BACKEND"

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False


def requested_backend():
    value = os.environ.get(BACKEND_ENV, "numba").strip().lower()
    if value not in ("numba", "numpy"):
        raise ValueError(f"{BACKEND_ENV} must be 'numba' or 'numpy', got {value!r}")
    return value


def use_numba():
    """True when kernels should dispatch to their compiled version."""
    return HAVE_NUMBA and requested_backend() == "numba"


def njit(*args, **kwargs):
    """``numba.njit`` when numba is importable, identity decorator otherwise."""
    if HAVE_NUMBA:
        return numba.njit(*args, **kwargs)

    def wrapper(f):
        return f

    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return wrapper
