"""Hot convolution kernels: an im2col+BLAS numpy implementation and a
compiled Cython extension with direct vectorized loops.

The backend is selected at import time. With BLAS-backed numpy the im2col
formulation measures faster across this model's shapes (training batches,
offline inference and small streaming chunks alike), so it is the default;
set WAVECLEAN_BACKEND=cython to prefer the compiled core when available, or
WAVECLEAN_BACKEND=numpy / WAVECLEAN_PURE_PYTHON=1 to force the fallback.
``benchmarks/bench_kernels.py`` compares the two per shape.
"""
from __future__ import annotations

import os
import warnings

from . import numpy_backend

try:
    from . import _cykernels
except ImportError:
    _cykernels = None

_BACKENDS = {"numpy": numpy_backend}
if _cykernels is not None:
    _BACKENDS["cython"] = _cykernels


def _initial_backend() -> str:
    if os.environ.get("WAVECLEAN_PURE_PYTHON"):
        return "numpy"
    requested = os.environ.get("WAVECLEAN_BACKEND", "").strip().lower()
    if requested:
        if requested in _BACKENDS:
            return requested
        warnings.warn(f"WAVECLEAN_BACKEND={requested!r} unavailable; using numpy")
    return "numpy"


BACKEND = _initial_backend()
_active = _BACKENDS[BACKEND]


def available_backends() -> list[str]:
    return sorted(_BACKENDS)


def active_backend() -> str:
    return BACKEND


def use_backend(name: str) -> None:
    """Switch the conv kernel implementation ("numpy" or "cython")."""
    global _active, BACKEND
    if name not in _BACKENDS:
        raise ValueError(f"unknown backend {name!r}; available: {available_backends()}")
    _active = _BACKENDS[name]
    BACKEND = name


def conv1d_fwd(x, w, b, stride, dilation, pad_left):
    return _active.conv1d_fwd(x, w, b, stride, dilation, pad_left)


def conv1d_bwd(x, w, stride, dilation, pad_left, gy, need_gx=True, need_gw=True):
    return _active.conv1d_bwd(x, w, stride, dilation, pad_left, gy, need_gx, need_gw)


def convt1d_fwd(x, w, b, stride, trim_right):
    return _active.convt1d_fwd(x, w, b, stride, trim_right)


def convt1d_bwd(x, w, stride, trim_right, gy, need_gx=True, need_gw=True):
    return _active.convt1d_bwd(x, w, stride, trim_right, gy, need_gx, need_gw)
