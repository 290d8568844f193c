# cython: language_level=3
"""Compiled 2D stencil kernels; same contracts as ``_pykernels``."""
import numpy as np

ctypedef double f64


def grad2d(const f64[:, :, ::1] f, f64 hx, f64 hy):
    cdef Py_ssize_t nx = f.shape[0], ny = f.shape[1], nc = f.shape[2]
    cdef Py_ssize_t i, j, c
    cdef f64 ihx = 1.0 / hx, ihy = 1.0 / hy
    out = np.zeros((nx, ny, nc, 2))
    cdef f64[:, :, :, ::1] o = out
    for i in range(nx):
        for j in range(ny):
            for c in range(nc):
                if i < nx - 1:
                    o[i, j, c, 0] = (f[i + 1, j, c] - f[i, j, c]) * ihx
                if j < ny - 1:
                    o[i, j, c, 1] = (f[i, j + 1, c] - f[i, j, c]) * ihy
    return out


def div2d(const f64[:, :, :, ::1] F, f64 hx, f64 hy):
    cdef Py_ssize_t nx = F.shape[0], ny = F.shape[1], nc = F.shape[2]
    cdef Py_ssize_t i, j, c
    cdef f64 ihx = 1.0 / hx, ihy = 1.0 / hy, v
    out = np.empty((nx, ny, nc))
    cdef f64[:, :, ::1] o = out
    for i in range(nx):
        for j in range(ny):
            for c in range(nc):
                v = 0.0
                if i < nx - 1:
                    v += F[i, j, c, 0] * ihx
                if i > 0:
                    v -= F[i - 1, j, c, 0] * ihx
                if j < ny - 1:
                    v += F[i, j, c, 1] * ihy
                if j > 0:
                    v -= F[i, j - 1, c, 1] * ihy
                o[i, j, c] = v
    return out


def div_coef_grad2d(const f64[:, :, ::1] u, const f64[:, ::1] coef, f64 hx, f64 hy):
    cdef Py_ssize_t nx = u.shape[0], ny = u.shape[1], nc = u.shape[2]
    cdef Py_ssize_t i, j, c
    cdef f64 ax = 1.0 / (hx * hx), ay = 1.0 / (hy * hy), v
    out = np.empty((nx, ny, nc))
    cdef f64[:, :, ::1] o = out
    for i in range(nx):
        for j in range(ny):
            for c in range(nc):
                v = 0.0
                if i < nx - 1:
                    v += coef[i, j] * (u[i + 1, j, c] - u[i, j, c]) * ax
                if i > 0:
                    v -= coef[i - 1, j] * (u[i, j, c] - u[i - 1, j, c]) * ax
                if j < ny - 1:
                    v += coef[i, j] * (u[i, j + 1, c] - u[i, j, c]) * ay
                if j > 0:
                    v -= coef[i, j - 1] * (u[i, j, c] - u[i, j - 1, c]) * ay
                o[i, j, c] = v
    return out


def grad_sqnorm2d(const f64[:, :, ::1] u, f64 hx, f64 hy):
    cdef Py_ssize_t nx = u.shape[0], ny = u.shape[1], nc = u.shape[2]
    cdef Py_ssize_t i, j, c
    cdef f64 ihx = 1.0 / hx, ihy = 1.0 / hy, d, s
    out = np.empty((nx, ny))
    cdef f64[:, ::1] o = out
    for i in range(nx):
        for j in range(ny):
            s = 0.0
            for c in range(nc):
                if i < nx - 1:
                    d = (u[i + 1, j, c] - u[i, j, c]) * ihx
                    s += d * d
                if j < ny - 1:
                    d = (u[i, j + 1, c] - u[i, j, c]) * ihy
                    s += d * d
            o[i, j] = s
    return out
