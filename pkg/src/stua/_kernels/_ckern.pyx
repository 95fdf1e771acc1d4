# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of the numpy kernels in ``pykern``.

Streaming loops: no (W, N, N) intermediates, which is what makes them win
once the region count grows past a few hundred.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log, sqrt

cnp.import_array()


def gravity_window_mean(object dist_in, object flows_in, double rho, double eps_flow):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] dist = np.ascontiguousarray(dist_in, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] flows = np.ascontiguousarray(flows_in, dtype=np.float64)
    cdef Py_ssize_t n = dist.shape[0]
    cdef Py_ssize_t w = flows.shape[0]
    if flows.shape[1] != n:
        raise ValueError("flows must be (W, N) matching dist")
    cdef cnp.ndarray[cnp.float64_t, ndim=1] mean_logf = np.zeros(n, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.zeros((n, n), dtype=np.float64)
    cdef Py_ssize_t i, j, t
    cdef double acc, v
    for i in range(n):
        acc = 0.0
        for t in range(w):
            v = flows[t, i]
            if v < eps_flow:
                v = eps_flow
            acc += log(v)
        mean_logf[i] = acc / w
    for i in range(n):
        for j in range(n):
            if i != j:
                out[i, j] = exp(-dist[i, j]) + rho * (mean_logf[i] + mean_logf[j] - log(dist[i, j]))
    return out


def variance_views_fields(object values_in, object neighbors_in):
    cdef cnp.ndarray[cnp.float64_t, ndim=3] values = np.ascontiguousarray(values_in, dtype=np.float64)
    cdef cnp.ndarray[cnp.int64_t, ndim=2] neighbors = np.ascontiguousarray(neighbors_in, dtype=np.int64)
    cdef Py_ssize_t m = values.shape[0]
    cdef Py_ssize_t p = values.shape[1]
    cdef Py_ssize_t n = values.shape[2]
    cdef Py_ssize_t k = neighbors.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] var_s = np.zeros((m, n), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] var_ep = np.zeros(n, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] var_ip = np.zeros((m, n), dtype=np.float64)
    cdef Py_ssize_t a, b, i, j
    cdef double mean, sq, v, acc

    for a in range(m):
        for i in range(n):
            # intra-period: stdv over the p slots of period a
            mean = 0.0
            for j in range(p):
                mean += values[a, j, i]
            mean /= p
            sq = 0.0
            for j in range(p):
                v = values[a, j, i] - mean
                sq += v * v
            var_ip[a, i] = sqrt(sq / p)
            # spatial: stdv over neighbors at each slot, averaged over slots
            acc = 0.0
            for j in range(p):
                mean = 0.0
                for b in range(k):
                    mean += values[a, j, neighbors[i, b]]
                mean /= k
                sq = 0.0
                for b in range(k):
                    v = values[a, j, neighbors[i, b]] - mean
                    sq += v * v
                acc += sqrt(sq / k)
            var_s[a, i] = acc / p

    for i in range(n):
        # inter-period: stdv across the m periods at each slot, averaged
        acc = 0.0
        for j in range(p):
            mean = 0.0
            for a in range(m):
                mean += values[a, j, i]
            mean /= m
            sq = 0.0
            for a in range(m):
                v = values[a, j, i] - mean
                sq += v * v
            acc += sqrt(sq / m)
        var_ep[i] = acc / p
    return var_s, var_ep, var_ip
