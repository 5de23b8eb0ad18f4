"""Backend switch for the hot kernels.

Set ``SRGM_BACKEND=numpy`` (or ``SRGM_DISABLE_NUMBA=1``) before import to
force the pure-numpy fallback. Numba is used whenever it imports cleanly.
"""
import os

_requested = os.environ.get("SRGM_BACKEND", "").strip().lower()
_disabled = os.environ.get("SRGM_DISABLE_NUMBA", "").strip() not in ("", "0")

try:
    if _requested == "numpy" or _disabled:
        raise ImportError("numba disabled by environment")
    from numba import njit  # noqa: F401

    HAS_NUMBA = True
except ImportError:
    HAS_NUMBA = False

BACKEND = "numba" if HAS_NUMBA else "numpy"
