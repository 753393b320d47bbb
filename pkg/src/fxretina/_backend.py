"""Kernel backend selection.

The hot per-pixel loops exist twice: as numba ``@njit`` kernels and as
vectorised numpy code.  ``FXRETINA_BACKEND=numpy`` forces the fallback;
otherwise numba is used whenever it imports.
"""
from __future__ import annotations

import os

try:
    import numba as _numba
except ImportError:  # pragma: no cover - exercised only without numba
    _numba = None

BACKENDS = ("numba", "numpy")
HAVE_NUMBA = _numba is not None


def njit(func):
    """``numba.njit(cache=True)`` when available, identity otherwise."""
    if _numba is None:  # pragma: no cover
        return func
    return _numba.njit(cache=True)(func)


def default_backend() -> str:
    requested = os.environ.get("FXRETINA_BACKEND", "").strip().lower()
    if requested == "numpy":
        return "numpy"
    if requested not in ("", "numba"):
        raise ValueError(f"FXRETINA_BACKEND must be one of {BACKENDS}, got {requested!r}")
    return "numba" if HAVE_NUMBA else "numpy"


def resolve_backend(backend: str | None) -> str:
    if backend is None:
        return default_backend()
    if backend not in BACKENDS:
        raise ValueError(f"unknown backend {backend!r}; expected one of {BACKENDS}")
    if backend == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba backend requested but numba is not installed")
    return backend
