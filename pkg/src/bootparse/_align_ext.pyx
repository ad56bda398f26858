# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled E-step and Viterbi kernels for the diagonal-prior IBM Model 2."""
import numpy as np

from libc.math cimport exp, fabs, log


cdef inline double _prior_row(int i, int m, int n, double lam, double* w) noexcept nogil:
    # fills w[0..n-1] with exp(lam * h(i, j)) and returns their sum
    cdef int j
    cdef double z = 0.0, v
    cdef double ri = <double>i / m
    for j in range(1, n + 1):
        v = exp(-lam * fabs(ri - <double>j / n))
        w[j - 1] = v
        z += v
    return z


def estep(const int[:] tgt_len, const int[:] src_len, const long long[:] pair_off,
          const int[:] pair_idx, const double[:] t, double p0, double lam,
          double null_t, double[:] post, Py_ssize_t lo, Py_ssize_t hi):
    """Write link posteriors for sentences lo..hi-1 into ``post``; return their log-likelihood."""
    cdef Py_ssize_t s, base
    cdef int i, j, m, n, maxn = 1
    cdef double z, tot, s0, ll = 0.0
    for s in range(lo, hi):
        if src_len[s] > maxn:
            maxn = src_len[s]
    cdef double[:] w = np.empty(maxn, dtype=np.float64)
    with nogil:
        for s in range(lo, hi):
            m = tgt_len[s]
            n = src_len[s]
            base = pair_off[s]
            for i in range(1, m + 1):
                z = _prior_row(i, m, n, lam, &w[0])
                s0 = p0 * null_t
                tot = s0
                for j in range(n):
                    w[j] = (1.0 - p0) * w[j] / z * t[pair_idx[base + (i - 1) * n + j]]
                    tot = tot + w[j]
                for j in range(n):
                    post[base + (i - 1) * n + j] = w[j] / tot
                ll += log(tot)
    return ll


def viterbi(int m, int n, const double[:] tvals, double p0, double lam, double null_t):
    """Best source position (1-based, 0 = NULL) for each of the m target words."""
    out = np.zeros(m, dtype=np.int64)
    cdef long long[:] best = out
    cdef double[:] w = np.empty(n, dtype=np.float64)
    cdef int i, j, arg
    cdef double z, score, top
    with nogil:
        for i in range(1, m + 1):
            z = _prior_row(i, m, n, lam, &w[0])
            top = p0 * null_t
            arg = 0
            for j in range(n):
                score = (1.0 - p0) * w[j] / z * tvals[(i - 1) * n + j]
                if score > top:
                    top = score
                    arg = j + 1
            best[i - 1] = arg
    return out
