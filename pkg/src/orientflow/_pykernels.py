"""Numpy stencil kernels (reference implementation and fallback).

Fields carry spatial axes first and a trailing component axis:
``f.shape == dims + (C,)``.  Gradients append an axis of length ``N``.
Differences are forward, with a zero flux through the last face along each
axis (mirror ghost cell), and ``div`` is the exact negative adjoint of
``grad`` for the uniform cell-volume inner product.
"""
import numpy as np


def _axis_slices(ndim, axis, lo, hi):
    sl = [slice(None)] * ndim
    sl[axis] = slice(lo, hi)
    return tuple(sl)


def grad(f, h):
    N = len(h)
    out = np.zeros(f.shape + (N,))
    for a in range(N):
        head = _axis_slices(f.ndim, a, 0, -1)
        tail = _axis_slices(f.ndim, a, 1, None)
        out[head + (a,)] = (f[tail] - f[head]) / h[a]
    return out


def div(F, h):
    N = len(h)
    out = np.zeros(F.shape[:-1])
    for a in range(N):
        Fa = F[..., a]
        head = _axis_slices(Fa.ndim, a, 0, -1)
        tail = _axis_slices(Fa.ndim, a, 1, None)
        inner = Fa[head] / h[a]
        out[head] += inner
        out[tail] -= inner
    return out


def div_coef_grad(u, c, h):
    """``div(c grad u)`` for a per-cell scalar coefficient ``c``."""
    return div(c[..., None, None] * grad(u, h), h)


def grad_sqnorm(u, h):
    """Per-cell squared Frobenius norm of ``grad u``."""
    g = grad(u, h)
    return np.sum(g * g, axis=(-2, -1))
