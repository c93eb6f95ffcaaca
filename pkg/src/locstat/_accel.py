"""Numba switch shared by the hot kernels.

Set ``LOCSTAT_DISABLE_NUMBA=1`` before import to force the pure-numpy path.
Every kernel module keeps both implementations importable by name
(``*_numba`` / ``*_numpy``) so the benchmark and the parity tests can call
either one directly.
"""

import logging
import os

_FLAG = os.environ.get("LOCSTAT_DISABLE_NUMBA", "").strip().lower()
DISABLED_BY_ENV = _FLAG not in ("", "0", "false", "no")

try:
    import numba

    logging.getLogger("numba").setLevel(logging.WARNING)
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and not DISABLED_BY_ENV


def njit(*args, **kwargs):
    """``numba.njit`` with caching on, or a no-op decorator without numba."""
    kwargs.setdefault("cache", True)
    if not HAVE_NUMBA:
        if args and callable(args[0]):
            return args[0]
        return lambda f: f
    return numba.njit(*args, **kwargs)


def backend_name():
    return "numba" if USE_NUMBA else "numpy"


def set_threads(n):
    """Set the numba worker count; ``0`` leaves the numba default."""
    if USE_NUMBA and n and n > 0:
        numba.set_num_threads(min(int(n), numba.config.NUMBA_NUM_THREADS))
