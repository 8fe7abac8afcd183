# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels; mirrors ``_pycore`` function by function."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()


cdef inline Py_ssize_t _left(const double[::1] a, double v) noexcept nogil:
    # first index with a[i] >= v
    cdef Py_ssize_t lo = 0, hi = a.shape[0], mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if a[mid] < v:
            lo = mid + 1
        else:
            hi = mid
    return lo


cdef inline Py_ssize_t _right(const double[::1] a, double v) noexcept nogil:
    # first index with a[i] > v
    cdef Py_ssize_t lo = 0, hi = a.shape[0], mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if a[mid] <= v:
            lo = mid + 1
        else:
            hi = mid
    return lo


def tcp_chain(double z0, double kappa, e):
    cdef const double[::1] ev = np.ascontiguousarray(e, dtype=np.float64)
    cdef Py_ssize_t n = ev.shape[0], k
    z_arr = np.empty(n + 1)
    zm_arr = np.empty(n)
    s_arr = np.empty(n)
    cdef double[::1] z = z_arr
    cdef double[::1] zm = zm_arr
    cdef double[::1] s = s_arr
    cdef double cur = z0, t, ek, pre
    z[0] = cur
    with nogil:
        for k in range(n):
            ek = ev[k]
            t = 2.0 * ek / (cur + sqrt(cur * cur + 2.0 * ek))
            s[k] = t
            pre = cur + t
            zm[k] = pre
            cur = kappa * pre
            z[k + 1] = cur
    return z_arr, zm_arr, s_arr


def epan_sums(sorted_x, centers, double h):
    cdef const double[::1] x = np.ascontiguousarray(sorted_x, dtype=np.float64)
    cdef const double[::1] c = np.ascontiguousarray(np.atleast_1d(centers), dtype=np.float64)
    cdef Py_ssize_t nc = c.shape[0], j, i, lo, hi
    out_arr = np.empty(nc)
    cdef double[::1] out = out_arr
    cdef double acc, u
    with nogil:
        for j in range(nc):
            lo = _right(x, c[j] - h)
            hi = _left(x, c[j] + h)
            acc = 0.0
            for i in range(lo, hi):
                u = (x[i] - c[j]) / h
                acc = acc + 0.75 * (1.0 - u * u)
            out[j] = acc / h
    return out_arr


def lcp_sums(z_sorted, s_by_z, double xi, double t, double hs, hts):
    cdef const double[::1] z = np.ascontiguousarray(z_sorted, dtype=np.float64)
    cdef const double[::1] s = np.ascontiguousarray(s_by_z, dtype=np.float64)
    cdef const double[::1] ht = np.ascontiguousarray(np.atleast_1d(hts), dtype=np.float64)
    cdef Py_ssize_t nh = ht.shape[0], i, j, lo, hi
    num_arr = np.zeros(nh)
    cdef double[::1] num = num_arr
    cdef double den = 0.0, u, w, v
    with nogil:
        lo = _right(z, xi - hs)
        hi = _left(z, xi + hs)
        for i in range(lo, hi):
            u = (z[i] - xi) / hs
            w = 0.75 * (1.0 - u * u) / hs
            if s[i] > t:
                den = den + w
            for j in range(nh):
                v = (s[i] - t) / ht[j]
                if v < 1.0 and v > -1.0:
                    num[j] = num[j] + w * 0.75 * (1.0 - v * v)
        for j in range(nh):
            num[j] = num[j] / ht[j]
    return num_arr, den


def amg_criterion(z_sorted, s_by_z, x_values, xi_grid, double hs):
    cdef const double[::1] z = np.ascontiguousarray(z_sorted, dtype=np.float64)
    cdef const double[::1] s = np.ascontiguousarray(s_by_z, dtype=np.float64)
    cdef const double[::1] xv = np.ascontiguousarray(x_values, dtype=np.float64)
    cdef const double[::1] xg = np.ascontiguousarray(xi_grid, dtype=np.float64)
    cdef Py_ssize_t nx = xv.shape[0], nm = xg.shape[0], m, i, j, lo, hi, a, b, mid
    crit_arr = np.zeros((nx, nm))
    cdef double[:, ::1] crit = crit_arr
    hist_arr = np.zeros(nx + 1)
    cdef double[::1] hist = hist_arr
    cdef double xi, u, w, acc
    with nogil:
        for m in range(nm):
            xi = xg[m]
            lo = _right(z, xi - hs)
            hi = _left(z, xi + hs)
            if hi <= lo:
                continue
            for j in range(nx + 1):
                hist[j] = 0.0
            for i in range(lo, hi):
                u = (z[i] - xi) / hs
                w = 0.75 * (1.0 - u * u) / hs
                # count of thresholds xv[j] - xi strictly below s[i]
                a = 0
                b = nx
                while a < b:
                    mid = (a + b) >> 1
                    if xv[mid] - xi < s[i]:
                        a = mid + 1
                    else:
                        b = mid
                hist[a] = hist[a] + w
            acc = 0.0
            for j in range(nx - 1, -1, -1):
                acc = acc + hist[j + 1]
                crit[j, m] = acc
    return crit_arr
