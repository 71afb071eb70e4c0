"""Backend selection for the compiled kernels.

``MIRGLUCOSE_BACKEND=numpy`` forces the pure-numpy code paths even when numba
is installed. Any other value (or an unset variable) uses numba if it imports.
The flag is read once, at import time.
"""

import os

_requested = os.environ.get("MIRGLUCOSE_BACKEND", "numba").strip().lower()

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency in CI
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and _requested != "numpy"
BACKEND = "numba" if USE_NUMBA else "numpy"


def njit(func):
    """Compile ``func`` with numba when available, else return it untouched."""
    if not HAVE_NUMBA:
        return func
    return numba.njit(cache=True, nogil=True)(func)
