"""Optional numba acceleration.

Set ``FAULTVOTE_DISABLE_NUMBA=1`` to force the pure-numpy code paths. The
flag is read once at import time.
"""

from __future__ import annotations

import os

_FLAG = os.environ.get("FAULTVOTE_DISABLE_NUMBA", "").strip().lower()
DISABLED_BY_ENV = _FLAG in {"1", "true", "yes", "on"}

try:
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAS_NUMBA = False

USE_NUMBA = HAS_NUMBA and not DISABLED_BY_ENV


def njit(func):
    """Compile ``func`` with ``numba.njit`` when numba is importable.

    Compilation happens even when the env flag disables acceleration so the
    benchmark can compare both paths; dispatch is decided by :func:`pick`.
    """
    if not HAS_NUMBA:
        return func
    return numba.njit(cache=True, nogil=True)(func)


def pick(fast, slow):
    return fast if USE_NUMBA else slow


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"
