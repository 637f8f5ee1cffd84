# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled product-kernel sums for Nadaraya-Watson regression."""

import numpy as np

from libc.math cimport exp, fabs


def nw_sums(const double[:, ::1] train_x, const double[:, ::1] train_y,
            const double[::1] h, const double[:, ::1] query, int kernel):
    """Kernel-weighted sums at each query point.

    Returns ``(num, den)`` where ``den[a] = sum_i w_ia`` and
    ``num[a, c] = sum_i w_ia * train_y[i, c]``. Weights are the product kernel
    without the ``1/prod(h)`` factor and, for the Gaussian, without
    ``(2 pi)^(-q/2)``. ``kernel`` is 0 for Gaussian, 1 for Epanechnikov.
    """
    cdef Py_ssize_t m = train_x.shape[0]
    cdef Py_ssize_t q = train_x.shape[1]
    cdef Py_ssize_t k = train_y.shape[1]
    cdef Py_ssize_t nq = query.shape[0]
    cdef Py_ssize_t a, i, j, c
    cdef double u, acc, w
    num_arr = np.zeros((nq, k), dtype=np.float64)
    den_arr = np.zeros(nq, dtype=np.float64)
    inv_arr = np.empty(q, dtype=np.float64)
    cdef double[:, ::1] num = num_arr
    cdef double[::1] den = den_arr
    cdef double[::1] inv_h = inv_arr
    for j in range(q):
        inv_h[j] = 1.0 / h[j]
    with nogil:
        for a in range(nq):
            for i in range(m):
                if kernel == 0:
                    acc = 0.0
                    for j in range(q):
                        u = (train_x[i, j] - query[a, j]) * inv_h[j]
                        acc = acc + u * u
                    w = exp(-0.5 * acc)
                else:
                    w = 1.0
                    for j in range(q):
                        u = (train_x[i, j] - query[a, j]) * inv_h[j]
                        if fabs(u) >= 1.0:
                            w = 0.0
                            break
                        w = w * 0.75 * (1.0 - u * u)
                if w != 0.0:
                    den[a] += w
                    for c in range(k):
                        num[a, c] += w * train_y[i, c]
    return num_arr, den_arr
