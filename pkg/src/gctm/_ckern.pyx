# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for the hot path: fused dense layers (BLAS dgemm),
activation and optimizer loops, and the full Sinkhorn sweep.

Mirrors ``_npkern`` function for function; ``gctm.backend`` selects one of
the two at import time.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport cos, exp, log, sin, sqrt
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()


cdef inline double _sigmoid(double z) noexcept nogil:
    return 1.0 / (1.0 + exp(-z))


def affine(const double[:, ::1] h, const double[:, ::1] w, const double[::1] b):
    cdef int m = h.shape[0], k = h.shape[1], n = w.shape[1]
    out = np.empty((m, n), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef double alpha = 1.0, beta = 0.0
    cdef Py_ssize_t i, j
    if m > 0 and k > 0 and n > 0:
        # row-major C = A @ B done as column-major C^T = B^T A^T
        dgemm("N", "N", &n, &m, &k, &alpha, &w[0, 0], &n, &h[0, 0], &k,
              &beta, &o[0, 0], &n)
    with nogil:
        for i in range(m):
            for j in range(n):
                o[i, j] += b[j]
    return out


def affine_vjp(const double[:, ::1] h, const double[:, ::1] w, const double[:, ::1] dz):
    cdef int m = h.shape[0], k = h.shape[1], n = w.shape[1]
    dw = np.empty((k, n), dtype=np.float64)
    db = np.zeros(n, dtype=np.float64)
    dh = np.empty((m, k), dtype=np.float64)
    cdef double[:, ::1] dwv = dw
    cdef double[::1] dbv = db
    cdef double[:, ::1] dhv = dh
    cdef double alpha = 1.0, beta = 0.0
    cdef Py_ssize_t i, j
    if m > 0 and k > 0 and n > 0:
        # dw = h^T @ dz  (k x n row-major)
        dgemm("N", "T", &n, &k, &m, &alpha, &dz[0, 0], &n, &h[0, 0], &k,
              &beta, &dwv[0, 0], &n)
        # dh = dz @ w^T  (m x k row-major)
        dgemm("T", "N", &k, &m, &n, &alpha, &w[0, 0], &n, &dz[0, 0], &n,
              &beta, &dhv[0, 0], &k)
    with nogil:
        for i in range(m):
            for j in range(n):
                dbv[j] += dz[i, j]
    return dw, db, dh


def silu(const double[:, ::1] z):
    cdef Py_ssize_t m = z.shape[0], n = z.shape[1], i, j
    out = np.empty((m, n), dtype=np.float64)
    cdef double[:, ::1] o = out
    with nogil:
        for i in range(m):
            for j in range(n):
                o[i, j] = z[i, j] * _sigmoid(z[i, j])
    return out


def silu_vjp(const double[:, ::1] z, const double[:, ::1] da):
    cdef Py_ssize_t m = z.shape[0], n = z.shape[1], i, j
    cdef double s
    out = np.empty((m, n), dtype=np.float64)
    cdef double[:, ::1] o = out
    with nogil:
        for i in range(m):
            for j in range(n):
                s = _sigmoid(z[i, j])
                o[i, j] = da[i, j] * (s * (1.0 + z[i, j] * (1.0 - s)))
    return out


def time_embed(t, double[::1] freqs):
    cdef const double[::1] tv = np.ascontiguousarray(t, dtype=np.float64)
    cdef Py_ssize_t m = tv.shape[0], nf = freqs.shape[0], i, k
    cdef double ang
    out = np.empty((m, 2 * nf), dtype=np.float64)
    cdef double[:, ::1] o = out
    with nogil:
        for i in range(m):
            for k in range(nf):
                ang = tv[i] * freqs[k]
                o[i, k] = sin(ang)
                o[i, nf + k] = cos(ang)
    return out


def lerp_rows(const double[:, ::1] x0, const double[:, ::1] x1, const double[::1] t):
    cdef Py_ssize_t m = x0.shape[0], d = x0.shape[1], i, j
    cdef double ti
    out = np.empty((m, d), dtype=np.float64)
    cdef double[:, ::1] o = out
    with nogil:
        for i in range(m):
            ti = t[i]
            for j in range(d):
                o[i, j] = (1.0 - ti) * x0[i, j] + ti * x1[i, j]
    return out


def pseudo_huber_rows(const double[:, ::1] a, const double[:, ::1] b, double c):
    cdef Py_ssize_t m = a.shape[0], d = a.shape[1], i, j
    cdef double acc, diff
    out = np.empty(m, dtype=np.float64)
    cdef double[::1] o = out
    with nogil:
        for i in range(m):
            acc = 0.0
            for j in range(d):
                diff = a[i, j] - b[i, j]
                acc += diff * diff
            o[i] = sqrt(acc + c * c) - c
    return out


def adam_update(float[::1] w, const double[::1] grad, double[::1] m, double[::1] v,
                long step, double lr, double beta1, double beta2, double eps):
    cdef Py_ssize_t n = w.shape[0], i
    cdef double bc1 = 1.0 - beta1 ** step
    cdef double bc2 = 1.0 - beta2 ** step
    cdef double mi, vi
    with nogil:
        for i in range(n):
            mi = beta1 * m[i] + (1.0 - beta1) * grad[i]
            vi = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i]
            m[i] = mi
            v[i] = vi
            w[i] = <float> (w[i] - lr * (mi / bc1) / (sqrt(vi / bc2) + eps))


def ema_update(float[::1] ema, const float[::1] w, double decay):
    cdef Py_ssize_t n = ema.shape[0], i
    cdef double e
    with nogil:
        for i in range(n):
            e = <double> ema[i]
            ema[i] = <float> (e + (1.0 - decay) * (<double> w[i] - e))


def sinkhorn_potentials(const double[:, ::1] cost, double tau, double tol, long max_iter):
    cdef Py_ssize_t m = cost.shape[0], i, j
    cdef double log_marg = -log(<double> m)
    cdef double inv_tau = 1.0 / tau
    f_arr = np.zeros(m, dtype=np.float64)
    g_arr = np.zeros(m, dtype=np.float64)
    cdef double[::1] f = f_arr
    cdef double[::1] g = g_arr
    cdef double amax, acc, a, violation = np.inf
    cdef long sweeps = 0
    cdef bint check
    cdef double target = 1.0 / (<double> m)
    while sweeps < max_iter:
        sweeps += 1
        check = sweeps % 4 == 0 or sweeps == max_iter
        with nogil:
            for i in range(m):
                amax = -1e308
                for j in range(m):
                    a = (g[j] - cost[i, j]) * inv_tau
                    if a > amax:
                        amax = a
                acc = 0.0
                for j in range(m):
                    acc += exp((g[j] - cost[i, j]) * inv_tau - amax)
                f[i] = tau * (log_marg - (amax + log(acc)))
            for j in range(m):
                amax = -1e308
                for i in range(m):
                    a = (f[i] - cost[i, j]) * inv_tau
                    if a > amax:
                        amax = a
                acc = 0.0
                for i in range(m):
                    acc += exp((f[i] - cost[i, j]) * inv_tau - amax)
                g[j] = tau * (log_marg - (amax + log(acc)))
            if check:
                # rows are the violated marginal after the column update
                violation = 0.0
                for i in range(m):
                    acc = 0.0
                    for j in range(m):
                        acc += exp((f[i] + g[j] - cost[i, j]) * inv_tau)
                    a = acc - target
                    if a < 0.0:
                        a = -a
                    if a > violation:
                        violation = a
        if check and violation < tol:
            break
    return f_arr, g_arr, sweeps, violation
