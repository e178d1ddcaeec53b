# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the hot loops; see ``_pykernels`` for the contracts."""

import numpy as np

from libc.math cimport log2, fabs, INFINITY


def iterate_bids(double[:, ::1] bids, const double[:, ::1] coef, const double[::1] reserve,
                 const double[:, ::1] lower, const double[:, ::1] upper,
                 const unsigned char[:, ::1] active, double tol, Py_ssize_t window,
                 Py_ssize_t streak, double[:, :, ::1] out):
    cdef Py_ssize_t n_slots = active.shape[0]
    cdef Py_ssize_t n = bids.shape[0]
    cdef Py_ssize_t m = bids.shape[1]
    cdef Py_ssize_t t, i, k
    cdef double x, d, change
    cdef double[::1] total = np.empty(m)
    cdef double[:, ::1] new = np.empty((n, m))
    for t in range(n_slots):
        for k in range(m):
            total[k] = bids[0, k]
        for i in range(1, n):
            for k in range(m):
                total[k] += bids[i, k]
        for i in range(n):
            for k in range(m):
                if active[t, i]:
                    x = coef[i, k] * ((total[k] - bids[i, k]) + reserve[k])
                    if x > upper[i, k]:
                        x = upper[i, k]
                    if x < lower[i, k]:
                        x = lower[i, k]
                    new[i, k] = x
                else:
                    new[i, k] = bids[i, k]
        change = 0.0
        for i in range(n):
            for k in range(m):
                d = fabs(new[i, k] - bids[i, k])
                if d > change:
                    change = d
                bids[i, k] = new[i, k]
                out[t, i, k] = new[i, k]
        if change < tol:
            streak += 1
        else:
            streak = 0
        if streak >= window:
            return t + 1, streak, True
    return n_slots, streak, False


def efficiency_search(const double[:, :, ::1] snr, const unsigned char[:, :, ::1] active,
                      const Py_ssize_t[::1] counts, const double[::1] gamma, double bandwidth):
    cdef Py_ssize_t n_relays = snr.shape[0]
    cdef Py_ssize_t n_users = snr.shape[2]
    cdef Py_ssize_t i, k
    cdef Py_ssize_t[::1] idx = np.zeros(n_relays, dtype=np.intp)
    best_idx = np.zeros(n_relays, dtype=np.intp)
    cdef Py_ssize_t[::1] best_view = best_idx
    cdef double[::1] base = np.empty(n_users)
    cdef double best = -INFINITY
    cdef double val, s, r
    cdef long mcount
    for i in range(n_users):
        base[i] = bandwidth * log2(1.0 + gamma[i])
    while True:
        val = 0.0
        for i in range(n_users):
            s = 1.0 + gamma[i]
            mcount = 0
            for k in range(n_relays):
                s += snr[k, idx[k], i]
                mcount += active[k, idx[k], i]
            if mcount > 0:
                r = bandwidth * log2(s) / (mcount + 1) - base[i]
                if r > 0:
                    val += r
        if val > best:
            best = val
            for k in range(n_relays):
                best_view[k] = idx[k]
        k = n_relays - 1
        while k >= 0:
            idx[k] += 1
            if idx[k] < counts[k]:
                break
            idx[k] = 0
            k -= 1
        if k < 0:
            break
    return best, best_idx
