# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the hot loops; same signatures as the numpy fallback."""

import numpy as np
from libc.math cimport fabs


def propagate(expa, kicks, h0):
    """Affine recursion ``H[n+1] = expa[n] * H[n] + kicks[n]`` with ``H[0] = h0``."""
    cdef double complex[:, ::1] a = np.ascontiguousarray(expa, dtype=np.complex128)
    cdef double complex[:, ::1] k = np.ascontiguousarray(kicks, dtype=np.complex128)
    cdef Py_ssize_t N = a.shape[0], M = a.shape[1], n, j
    out_arr = np.empty((N + 1, M), dtype=np.complex128)
    out_arr[0] = h0
    cdef double complex[:, ::1] out = out_arr
    with nogil:
        for n in range(N):
            for j in range(M):
                out[n + 1, j] = a[n, j] * out[n, j] + k[n, j]
    return out_arr


def running_extrema(P):
    """Running minimum and maximum along axis 0."""
    cdef double[:, ::1] p = np.ascontiguousarray(P, dtype=np.float64)
    cdef Py_ssize_t N = p.shape[0], M = p.shape[1], n, j, m
    lo_arr = np.empty((N, M))
    hi_arr = np.empty((N, M))
    cdef double[:, ::1] lo = lo_arr
    cdef double[:, ::1] hi = hi_arr
    if N == 0:
        return lo_arr, hi_arr
    with nogil:
        for j in range(M):
            lo[0, j] = p[0, j]
            hi[0, j] = p[0, j]
        for n in range(1, N):
            m = n - 1
            for j in range(M):
                lo[n, j] = p[n, j] if p[n, j] < lo[m, j] else lo[m, j]
                hi[n, j] = p[n, j] if p[n, j] > hi[m, j] else hi[m, j]
    return lo_arr, hi_arr


def sup_abs_cumsum(incr):
    """Row-wise ``max_n |sum_{m<n} incr[m]|`` including the empty sum."""
    arr = np.asarray(incr, dtype=np.float64)
    nd = arr.ndim
    shape = arr.shape[: nd - 1]
    if arr.shape[nd - 1] == 0:
        return np.zeros(shape)
    flat = np.ascontiguousarray(arr.reshape(-1, arr.shape[nd - 1]))
    cdef double[:, ::1] x = flat
    cdef Py_ssize_t rows = x.shape[0], cols = x.shape[1], i, n
    res_arr = np.zeros(rows)
    cdef double[::1] res = res_arr
    cdef double acc, best
    with nogil:
        for i in range(rows):
            acc = 0.0
            best = 0.0
            for n in range(cols):
                acc = acc + x[i, n]
                if fabs(acc) > best:
                    best = fabs(acc)
            res[i] = best
    return res_arr.reshape(shape)


def first_passage(B, double level, Py_ssize_t cap):
    """First index ``n`` in ``1..cap`` with ``B[n]`` at or beyond ``level``, else ``cap``."""
    cdef double[::1] b = np.ascontiguousarray(B, dtype=np.float64)
    cdef Py_ssize_t n, found = cap, top = min(cap, b.shape[0] - 1)
    with nogil:
        if level > 0:
            for n in range(1, top + 1):
                if b[n] >= level:
                    found = n
                    break
        else:
            for n in range(1, top + 1):
                if b[n] <= level:
                    found = n
                    break
    return found
