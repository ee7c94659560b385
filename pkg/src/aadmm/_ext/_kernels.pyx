# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled versions of the sequential recursions in :mod:`aadmm.kernels`."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def discounted_cumsum(const double[:, ::1] q, double r2):
    """``S[t] = r2 * S[t-1] + q[t]`` down the rows of a C-contiguous 2-D array."""
    cdef Py_ssize_t T = q.shape[0], n = q.shape[1], t, j
    out = np.empty((T, n))
    cdef double[:, ::1] S = out
    if T == 0:
        return out
    for j in range(n):
        S[0, j] = q[0, j]
    for t in range(1, T):
        for j in range(n):
            S[t, j] = r2 * S[t - 1, j] + q[t, j]
    return out


def lti_response(const double[:, ::1] A, const double[:, ::1] B, const double[:, ::1] C,
                 const double[:, ::1] D, const double[:, ::1] w, const double[::1] x0):
    """Outputs ``y_k = C x_k + D w_k`` of ``x_{k+1} = A x_k + B w_k``."""
    cdef Py_ssize_t T = w.shape[0], m = w.shape[1], n = A.shape[0], p = C.shape[0]
    cdef Py_ssize_t k, i, j
    cdef double acc
    out = np.empty((T, p))
    states = np.empty((T + 1, n))
    cdef double[:, ::1] y = out
    cdef double[:, ::1] X = states
    for i in range(n):
        X[0, i] = x0[i]
    for k in range(T):
        for i in range(p):
            acc = 0.0
            for j in range(n):
                acc += C[i, j] * X[k, j]
            for j in range(m):
                acc += D[i, j] * w[k, j]
            y[k, i] = acc
        for i in range(n):
            acc = 0.0
            for j in range(n):
                acc += A[i, j] * X[k, j]
            for j in range(m):
                acc += B[i, j] * w[k, j]
            X[k + 1, i] = acc
    return out, states
