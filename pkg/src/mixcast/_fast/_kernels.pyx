# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hot-loop kernels: fused GELU, row softmax, row layernorm.

Contracts match ``fallback.py`` exactly; the two are interchangeable.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport erf, exp, sqrt

cnp.import_array()

cdef double INV_SQRT2 = 0.7071067811865476
cdef double INV_SQRT_2PI = 0.3989422804014327


def gelu_fwd(object x):
    shape = np.shape(x)
    cdef cnp.ndarray flat = np.ascontiguousarray(x, dtype=np.float64).ravel()
    cdef cnp.ndarray out = np.empty_like(flat)
    cdef double[::1] xv = flat
    cdef double[::1] ov = out
    cdef Py_ssize_t i, m = xv.shape[0]
    cdef double v
    for i in range(m):
        v = xv[i]
        ov[i] = 0.5 * v * (1.0 + erf(v * INV_SQRT2))
    return out.reshape(shape)


def gelu_bwd(object x, object dy):
    shape = np.shape(x)
    cdef cnp.ndarray xf = np.ascontiguousarray(x, dtype=np.float64).ravel()
    cdef cnp.ndarray df = np.ascontiguousarray(dy, dtype=np.float64).ravel()
    cdef cnp.ndarray out = np.empty_like(xf)
    cdef double[::1] xv = xf
    cdef double[::1] dv = df
    cdef double[::1] ov = out
    cdef Py_ssize_t i, m = xv.shape[0]
    cdef double v, cdf, pdf
    for i in range(m):
        v = xv[i]
        cdf = 0.5 * (1.0 + erf(v * INV_SQRT2))
        pdf = INV_SQRT_2PI * exp(-0.5 * v * v)
        ov[i] = dv[i] * (cdf + v * pdf)
    return out.reshape(shape)


def softmax_rows(object x):
    cdef cnp.ndarray xc = np.ascontiguousarray(x, dtype=np.float64)
    cdef cnp.ndarray out = np.empty_like(xc)
    cdef double[:, ::1] xv = xc
    cdef double[:, ::1] ov = out
    cdef Py_ssize_t i, j, r = xv.shape[0], c = xv.shape[1]
    cdef double mx, s
    for i in range(r):
        mx = xv[i, 0]
        for j in range(1, c):
            if xv[i, j] > mx:
                mx = xv[i, j]
        s = 0.0
        for j in range(c):
            ov[i, j] = exp(xv[i, j] - mx)
            s += ov[i, j]
        for j in range(c):
            ov[i, j] /= s
    return out


def layernorm_rows(object x, double eps):
    cdef cnp.ndarray xc = np.ascontiguousarray(x, dtype=np.float64)
    cdef cnp.ndarray out = np.empty_like(xc)
    cdef Py_ssize_t r = xc.shape[0], c = xc.shape[1]
    cdef cnp.ndarray mean = np.empty(r, dtype=np.float64)
    cdef cnp.ndarray rstd = np.empty(r, dtype=np.float64)
    cdef double[:, ::1] xv = xc
    cdef double[:, ::1] ov = out
    cdef double[::1] mv = mean
    cdef double[::1] rv = rstd
    cdef Py_ssize_t i, j
    cdef double s, m, v, d
    for i in range(r):
        s = 0.0
        for j in range(c):
            s += xv[i, j]
        m = s / c
        v = 0.0
        for j in range(c):
            d = xv[i, j] - m
            v += d * d
        v /= c
        mv[i] = m
        rv[i] = 1.0 / sqrt(v + eps)
        for j in range(c):
            ov[i, j] = (xv[i, j] - m) * rv[i]
    return out, mean, rstd
