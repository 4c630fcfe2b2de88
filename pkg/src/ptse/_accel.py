"""JIT switch shared by the numeric kernels.

Set ``PTSE_DISABLE_NUMBA=1`` before import to run the pure-numpy kernels.
"""

from __future__ import annotations

import os

_DISABLED = os.environ.get("PTSE_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

NUMBA_AVAILABLE = numba is not None
USE_NUMBA = NUMBA_AVAILABLE and not _DISABLED


def njit(fn):
    """Compile ``fn`` with numba in nopython mode, or return it untouched."""
    if not NUMBA_AVAILABLE:
        return fn
    return numba.njit(cache=True, nogil=True)(fn)


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"
