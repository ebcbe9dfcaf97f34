# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels; same contracts as ``epdp._pykernels``."""

import numpy as np

from libc.math cimport INFINITY, exp, expm1


def obs_scan(double[::1] values, counts, double sensitivity):
    cdef Py_ssize_t m = values.shape[0]
    cdef double[::1] cnt = np.ascontiguousarray(counts, dtype=np.float64)
    cdef double best = INFINITY, th, denom, var, bias, p, r, err
    cdef Py_ssize_t k, i, best_k = -1
    for k in range(m):
        th = values[k]
        denom = expm1(th)
        var = 0.0
        bias = 0.0
        for i in range(k):
            p = expm1(values[i]) / denom
            var += cnt[i] * p * (1.0 - p)
            bias += cnt[i] * (1.0 - p)
        r = sensitivity / th
        err = var + bias * bias + 2.0 * (r * r)
        if err < best:
            best = err
            best_k = k
    return best_k, best


def sample_keep(values, budgets, double threshold, uniforms):
    cdef const long long[::1] v = np.ascontiguousarray(values, dtype=np.int64)
    cdef const double[::1] b = np.ascontiguousarray(budgets, dtype=np.float64)
    cdef const double[::1] u = np.ascontiguousarray(uniforms, dtype=np.float64)
    cdef Py_ssize_t n = v.shape[0], i
    out = np.zeros(n, dtype=np.bool_)
    cdef unsigned char[::1] o = out.view(np.uint8)
    cdef double denom = expm1(threshold)
    for i in range(n):
        if v[i] < 0:
            continue
        if b[i] >= threshold or u[i] < expm1(b[i]) / denom:
            o[i] = 1
    return out


def sampled_histogram(values, budgets, double threshold, uniforms, Py_ssize_t d):
    cdef const long long[::1] v = np.ascontiguousarray(values, dtype=np.int64)
    cdef const double[::1] b = np.ascontiguousarray(budgets, dtype=np.float64)
    cdef const double[::1] u = np.ascontiguousarray(uniforms, dtype=np.float64)
    cdef Py_ssize_t n = v.shape[0], i
    out = np.zeros(d, dtype=np.int64)
    cdef long long[::1] o = out
    cdef double denom = expm1(threshold)
    for i in range(n):
        if v[i] < 0:
            continue
        if b[i] >= threshold or u[i] < expm1(b[i]) / denom:
            o[v[i]] += 1
    return out


def window_sums(dense, windows):
    cdef const double[:, ::1] a = np.ascontiguousarray(dense, dtype=np.float64)
    cdef const long long[::1] w = np.ascontiguousarray(windows, dtype=np.int64)
    cdef Py_ssize_t T = a.shape[0], n = a.shape[1], t, i
    out = np.empty((T, n), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef double s
    for i in range(n):
        s = 0.0
        for t in range(T):
            s += a[t, i]
            if t - w[i] >= 0:
                s -= a[t - w[i], i]
            o[t, i] = s
    return out


def rr_estimate(values, budgets, u_keep, u_other, Py_ssize_t d):
    cdef const long long[::1] v = np.ascontiguousarray(values, dtype=np.int64)
    cdef const double[::1] b = np.ascontiguousarray(budgets, dtype=np.float64)
    cdef const double[::1] uk = np.ascontiguousarray(u_keep, dtype=np.float64)
    cdef const double[::1] uo = np.ascontiguousarray(u_other, dtype=np.float64)
    cdef Py_ssize_t n = v.shape[0], i
    cdef long long rep, other, top = d - 2 if d >= 2 else 0
    cdef double p, inv_em1, const_sum = 0.0
    out = np.zeros(d, dtype=np.float64)
    cdef double[::1] o = out
    for i in range(n):
        if v[i] < 0:
            continue
        p = 1.0 / (1.0 + (d - 1) * exp(-b[i]))
        inv_em1 = 1.0 / expm1(b[i])
        if uk[i] < p:
            rep = v[i]
        else:
            other = <long long>(uo[i] * (d - 1))
            if other > top:
                other = top
            if other >= v[i]:
                other += 1
            rep = other
        o[rep] += 1.0 + d * inv_em1
        const_sum += inv_em1
    for i in range(d):
        o[i] -= const_sum
    return out
