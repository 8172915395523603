"""Numba switch.

Kernels are compiled with numba when it is importable and the environment
variable ``TARIFFDESIGN_NO_NUMBA`` is unset (or ``0``).  Otherwise every
kernel falls back to its vectorized numpy twin.
"""

import os

_flag = os.environ.get("TARIFFDESIGN_NO_NUMBA", "0").strip().lower()

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and _flag in ("", "0", "false", "no")


def njit(fn):
    """Compile ``fn`` with ``numba.njit`` when available, else return None."""
    if not HAVE_NUMBA:  # pragma: no cover
        return None
    return numba.njit(cache=True, nogil=True)(fn)
