# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled fused kernels: row softmax, layer norm, Adam.

Single-pass loops over C-contiguous float64 buffers; contracts match
``_kernels_py`` exactly.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, sqrt

cnp.import_array()


def softmax_rows_fwd(double[:, ::1] x):
    cdef Py_ssize_t m = x.shape[0], n = x.shape[1]
    out_arr = np.empty((m, n), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j
    cdef double mx, s
    for i in range(m):
        mx = x[i, 0]
        for j in range(1, n):
            if x[i, j] > mx:
                mx = x[i, j]
        s = 0.0
        for j in range(n):
            out[i, j] = exp(x[i, j] - mx)
            s += out[i, j]
        for j in range(n):
            out[i, j] /= s
    return out_arr


def softmax_rows_bwd(double[:, ::1] y, double[:, ::1] dy):
    cdef Py_ssize_t m = y.shape[0], n = y.shape[1]
    dx_arr = np.empty((m, n), dtype=np.float64)
    cdef double[:, ::1] dx = dx_arr
    cdef Py_ssize_t i, j
    cdef double dot
    for i in range(m):
        dot = 0.0
        for j in range(n):
            dot += dy[i, j] * y[i, j]
        for j in range(n):
            dx[i, j] = y[i, j] * (dy[i, j] - dot)
    return dx_arr


def layer_norm_fwd(double[:, ::1] s, double[::1] gain, double[::1] bias,
                   double eps):
    cdef Py_ssize_t m = s.shape[0], d = s.shape[1]
    out_arr = np.empty((m, d), dtype=np.float64)
    xhat_arr = np.empty((m, d), dtype=np.float64)
    istd_arr = np.empty(m, dtype=np.float64)
    cdef double[:, ::1] out = out_arr, xhat = xhat_arr
    cdef double[::1] istd = istd_arr
    cdef Py_ssize_t i, j
    cdef double mu, var, diff, inv
    for i in range(m):
        mu = 0.0
        for j in range(d):
            mu += s[i, j]
        mu /= d
        var = 0.0
        for j in range(d):
            diff = s[i, j] - mu
            var += diff * diff
        var /= d
        inv = 1.0 / sqrt(var + eps)
        istd[i] = inv
        for j in range(d):
            xhat[i, j] = (s[i, j] - mu) * inv
            out[i, j] = xhat[i, j] * gain[j] + bias[j]
    return out_arr, xhat_arr, istd_arr


def layer_norm_bwd(double[:, ::1] dy, double[:, ::1] xhat,
                   double[::1] inv_std, double[::1] gain):
    cdef Py_ssize_t m = dy.shape[0], d = dy.shape[1]
    dx_arr = np.empty((m, d), dtype=np.float64)
    dgain_arr = np.zeros(d, dtype=np.float64)
    dbias_arr = np.zeros(d, dtype=np.float64)
    cdef double[:, ::1] dx = dx_arr
    cdef double[::1] dgain = dgain_arr, dbias = dbias_arr
    cdef Py_ssize_t i, j
    cdef double m1, m2, dxh
    for i in range(m):
        m1 = 0.0
        m2 = 0.0
        for j in range(d):
            dxh = dy[i, j] * gain[j]
            m1 += dxh
            m2 += dxh * xhat[i, j]
        m1 /= d
        m2 /= d
        for j in range(d):
            dxh = dy[i, j] * gain[j]
            dx[i, j] = inv_std[i] * (dxh - m1 - xhat[i, j] * m2)
            dgain[j] += dy[i, j] * xhat[i, j]
            dbias[j] += dy[i, j]
    return dx_arr, dgain_arr, dbias_arr


def adam_update(double[::1] p, double[::1] g, double[::1] m, double[::1] v,
                double lr, double beta1, double beta2, double eps, long t):
    cdef Py_ssize_t n = p.shape[0]
    cdef double c1 = 1.0 - beta1**t
    cdef double c2 = 1.0 - beta2**t
    cdef Py_ssize_t i
    for i in range(n):
        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i]
        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i]
        p[i] -= lr * (m[i] / c1) / (sqrt(v[i] / c2) + eps)
