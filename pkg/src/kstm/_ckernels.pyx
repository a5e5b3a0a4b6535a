# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled co-occurrence and TextRank kernels.

Arithmetic order matches ``_pykernels`` exactly, so both backends return
bit-identical results.
"""

import numpy as np


def cooccurrence_matrix(const long long[:] ids, Py_ssize_t n_nodes, Py_ssize_t window):
    out = np.zeros((n_nodes, n_nodes), dtype=np.float64)
    cdef double[:, ::1] w = out
    cdef Py_ssize_t n = ids.shape[0]
    cdef Py_ssize_t i, j, stop
    cdef long long a, b
    for i in range(n):
        stop = i + window
        if stop > n:
            stop = n
        a = ids[i]
        for j in range(i + 1, stop):
            b = ids[j]
            if a != b:
                w[a, b] += 1.0
                w[b, a] += 1.0
    return out


def textrank_iterate(const double[:, ::1] weights, double damping, double tol, Py_ssize_t max_iter):
    cdef Py_ssize_t n = weights.shape[0]
    cdef Py_ssize_t u, v, it
    cdef double total, acc, delta = 0.0
    coef_arr = np.zeros((n, n), dtype=np.float64)
    cdef double[:, ::1] coef = coef_arr
    scores_arr = np.ones(n, dtype=np.float64)
    nxt_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] scores = scores_arr
    cdef double[::1] nxt = nxt_arr
    cdef double[::1] tmp

    for u in range(n):
        total = 0.0
        for v in range(n):
            total += weights[u, v]
        if total > 0.0:
            for v in range(n):
                if weights[u, v] != 0.0:
                    coef[u, v] = weights[u, v] / total

    it = 0
    while it < max_iter:
        it += 1
        delta = 0.0
        for v in range(n):
            acc = 0.0
            for u in range(n):
                if coef[u, v] != 0.0:
                    acc += coef[u, v] * scores[u]
            nxt[v] = (1.0 - damping) + damping * acc
            delta += abs(nxt[v] - scores[v])
        tmp = scores
        scores = nxt
        nxt = tmp
        if delta < tol:
            break
    return np.asarray(scores).copy(), it, delta
