"""Stencil kernel dispatch.

The compiled ``_ckernels`` extension handles 2D grids; everything else (and
every grid when the extension is missing or ``ORIENTFLOW_BACKEND=python`` is
set) goes through the numpy implementation in ``_pykernels``.
"""
from __future__ import annotations

import os
from contextlib import contextmanager

import numpy as np

from . import _pykernels as _py

try:
    if os.environ.get("ORIENTFLOW_BACKEND", "").lower() in ("python", "numpy"):
        raise ImportError("compiled kernels disabled by ORIENTFLOW_BACKEND")
    from . import _ckernels as _compiled
except ImportError:
    _compiled = None

_active = _compiled


def available_backends() -> list[str]:
    return ["python"] + (["cython"] if _compiled is not None else [])


def backend() -> str:
    return "cython" if _active is not None else "python"


def set_backend(name: str) -> str:
    """Switch backend process-wide; returns the previous name."""
    global _active
    previous = backend()
    if name == "python":
        _active = None
    elif name == "cython":
        if _compiled is None:
            raise RuntimeError("compiled kernels are not built")
        _active = _compiled
    else:
        raise ValueError(f"unknown backend {name!r}")
    return previous


@contextmanager
def using(name: str):
    previous = set_backend(name)
    try:
        yield
    finally:
        set_backend(previous)


def _c2d(arr, h):
    return _active is not None and len(h) == 2 and arr.ndim == 3


def grad(f: np.ndarray, h) -> np.ndarray:
    if _c2d(f, h):
        return _active.grad2d(np.ascontiguousarray(f, dtype=float), h[0], h[1])
    return _py.grad(f, h)


def div(F: np.ndarray, h) -> np.ndarray:
    if _active is not None and len(h) == 2 and F.ndim == 4:
        return _active.div2d(np.ascontiguousarray(F, dtype=float), h[0], h[1])
    return _py.div(F, h)


def div_coef_grad(u: np.ndarray, c: np.ndarray, h) -> np.ndarray:
    if _c2d(u, h):
        return _active.div_coef_grad2d(
            np.ascontiguousarray(u, dtype=float), np.ascontiguousarray(c, dtype=float), h[0], h[1]
        )
    return _py.div_coef_grad(u, c, h)


def grad_sqnorm(u: np.ndarray, h) -> np.ndarray:
    if _c2d(u, h):
        return _active.grad_sqnorm2d(np.ascontiguousarray(u, dtype=float), h[0], h[1])
    return _py.grad_sqnorm(u, h)
