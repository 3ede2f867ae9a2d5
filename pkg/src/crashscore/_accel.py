"""Switch between numba-compiled kernels and their pure-numpy twins.

Set ``CRASHSCORE_DISABLE_NUMBA=1`` before import to force the numpy path.
"""
from __future__ import annotations

import logging
import os

logger = logging.getLogger(__name__)

DISABLE_ENV = "CRASHSCORE_DISABLE_NUMBA"

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a soft dependency
    numba = None
    HAVE_NUMBA = False


def numba_disabled_by_env() -> bool:
    return os.environ.get(DISABLE_ENV, "").strip().lower() in {"1", "true", "yes", "on"}


USE_NUMBA = HAVE_NUMBA and not numba_disabled_by_env()

if HAVE_NUMBA and not USE_NUMBA:
    logger.info("numba available but disabled via %s", DISABLE_ENV)


def jit(func):
    """Compile ``func`` with numba in nopython mode, or return None without numba."""
    if not HAVE_NUMBA:
        return None
    return numba.njit(cache=True, nogil=True)(func)


def backend_name() -> str:
    return "numba" if USE_NUMBA else "numpy"
