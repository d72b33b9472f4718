"""Backend selection for the permanent-family kernels.

The compiled extension is preferred when it imported cleanly; the pure
NumPy module computes the same quantities otherwise.  ``SCHRO_CHAOS_BACKEND``
overrides the choice ("auto", "c", or "python"), and ``SCHRO_CHAOS_THREADS``
caps the worker threads used by replicate loops.
"""

import os

from . import _fallback

try:
    from . import _kernels as _compiled
except ImportError:
    _compiled = None


def _select():
    choice = os.environ.get("SCHRO_CHAOS_BACKEND", "auto").strip().lower()
    if choice not in ("auto", "c", "python"):
        raise ValueError(
            f"SCHRO_CHAOS_BACKEND must be auto, c or python, not {choice!r}"
        )
    if choice == "python":
        return _fallback
    if choice == "c":
        if _compiled is None:
            raise ImportError(
                "SCHRO_CHAOS_BACKEND=c but the compiled extension is not available"
            )
        return _compiled
    return _compiled if _compiled is not None else _fallback


_active = _select()

NAME: str = _active.NAME
permanent_scaled = _active.permanent_scaled
value_and_numerator = _active.value_and_numerator
minors_matrix = _active.minors_matrix


def thread_count(default: int = 1) -> int:
    """Worker thread cap from SCHRO_CHAOS_THREADS, else the given default."""
    raw = os.environ.get("SCHRO_CHAOS_THREADS", "").strip()
    if not raw:
        return max(1, default)
    try:
        value = int(raw)
    except ValueError:
        raise ValueError(f"SCHRO_CHAOS_THREADS must be an integer, not {raw!r}")
    return max(1, value)
