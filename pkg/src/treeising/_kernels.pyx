# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the kernels in ``_fallback.py`` (same interfaces)."""
from libc.math cimport exp, tanh, atanh, log1p, fabs, fmin, isinf

import numpy as np


cdef inline double _f(double h, double beta, double theta) nogil:
    cdef double z, a
    if isinf(h):
        return beta if h > 0 else -beta
    z = theta * tanh(h)
    if fabs(z) > 0.5:
        # logcosh difference with the linear parts cancelled exactly
        a = fabs(h)
        a = fmin(a, beta) + 0.5 * (log1p(exp(-2.0 * (a + beta))) - log1p(exp(-2.0 * fabs(a - beta))))
        return a if h > 0 else -a
    return atanh(z)


def f_theta(h, double beta):
    cdef double theta = tanh(beta)
    scalar = np.ndim(h) == 0
    arr = np.ascontiguousarray(h, dtype=float)
    out = np.empty(arr.shape)
    cdef double[::1] src = arr.reshape(-1)
    cdef double[::1] dst = out.reshape(-1)
    cdef Py_ssize_t k
    with nogil:
        for k in range(src.shape[0]):
            dst[k] = _f(src[k], beta, theta)
    return float(out[0]) if scalar else out


def glauber_run(signed char[::1] spins, long long[::1] indptr, long long[::1] indices,
                double beta, double[::1] fields, long long[::1] sites,
                double[::1] uniforms, Py_ssize_t n_sweeps,
                long long[::1] mag_out, long long[::1] edge_out,
                long long mag, long long edge):
    cdef Py_ssize_t n = spins.shape[0]
    cdef Py_ssize_t sweep, step, p, k = 0
    cdef long long i, j, loc
    cdef double z, p_plus, e
    cdef signed char new
    with nogil:
        for sweep in range(n_sweeps):
            for step in range(n):
                i = sites[k]
                loc = 0
                for p in range(indptr[i], indptr[i + 1]):
                    j = indices[p]
                    if j != i:
                        loc += spins[j]
                z = 2.0 * (beta * loc + fields[i])
                if z >= 0:
                    p_plus = 1.0 / (1.0 + exp(-z))
                else:
                    e = exp(z)
                    p_plus = e / (1.0 + e)
                new = 1 if uniforms[k] < p_plus else -1
                k += 1
                if new != spins[i]:
                    mag += 2 * new
                    edge += 2 * new * loc
                    spins[i] = new
            mag_out[sweep] = mag
            edge_out[sweep] = edge
    return mag, edge


def bp_upward(long long[::1] order, long long[::1] parent, double[::1] fields, double beta):
    cdef Py_ssize_t n = order.shape[0]
    cdef double theta = tanh(beta)
    h_up_arr = np.zeros(n)
    acc_arr = np.zeros(n)
    cdef double[::1] h_up = h_up_arr
    cdef double[::1] acc = acc_arr
    cdef Py_ssize_t k
    cdef long long v
    with nogil:
        for k in range(n - 1, -1, -1):
            v = order[k]
            h_up[v] = fields[v] + acc[v]
            if parent[v] >= 0:
                acc[parent[v]] += _f(h_up[v], beta, theta)
    return h_up_arr, acc_arr


def bp_downward(long long[::1] order, long long[::1] parent, double[::1] fields, double beta,
                double[::1] h_up, double[::1] acc):
    cdef Py_ssize_t n = order.shape[0]
    cdef double theta = tanh(beta)
    h_down_arr = np.zeros(n)
    f_down_arr = np.zeros(n)
    cdef double[::1] h_down = h_down_arr
    cdef double[::1] f_down = f_down_arr
    cdef Py_ssize_t k
    cdef long long v, p, root = order[0]
    with nogil:
        for k in range(1, n):
            v = order[k]
            p = parent[v]
            h_down[v] = fields[p] + (acc[p] - _f(h_up[v], beta, theta))
            if p != root:
                h_down[v] += f_down[p]
            f_down[v] = _f(h_down[v], beta, theta)
    return h_down_arr
