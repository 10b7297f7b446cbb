# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops. ``_fallback.py`` mirrors every function here."""
from libc.math cimport fabs

import numpy as np


def mf_objective_grad(const long long[::1] users, const long long[::1] items,
                      const double[::1] ratings, const double[::1] weights,
                      const double[:, ::1] V, const double[:, ::1] W,
                      const double[::1] a, const double[::1] b, double c,
                      double lam, int loss_code,
                      double[:, ::1] gV, double[:, ::1] gW,
                      double[::1] ga, double[::1] gb):
    """Weighted MF objective; gradients are written into gV, gW, ga, gb.

    loss_code 0 is squared error, 1 is absolute error. Returns (objective, dc).
    """
    cdef Py_ssize_t n = users.shape[0]
    cdef Py_ssize_t d = V.shape[1]
    cdef Py_ssize_t e, k, u, i
    cdef double pred, r, coef, data = 0.0, gc = 0.0, pen = 0.0

    gV[:, :] = 0.0
    gW[:, :] = 0.0
    ga[:] = 0.0
    gb[:] = 0.0
    for e in range(n):
        u = users[e]
        i = items[e]
        pred = a[u] + b[i] + c
        for k in range(d):
            pred += V[u, k] * W[i, k]
        r = pred - ratings[e]
        if loss_code == 0:
            data += weights[e] * (r * r)
            coef = 2.0 * r * weights[e]
        else:
            data += weights[e] * fabs(r)
            if r > 0:
                coef = weights[e]
            elif r < 0:
                coef = -weights[e]
            else:
                coef = 0.0
        for k in range(d):
            gV[u, k] += coef * W[i, k]
            gW[i, k] += coef * V[u, k]
        ga[u] += coef
        gb[i] += coef
        gc += coef

    for u in range(V.shape[0]):
        for k in range(d):
            pen += V[u, k] * V[u, k]
            gV[u, k] += 2.0 * lam * V[u, k]
    for i in range(W.shape[0]):
        for k in range(d):
            pen += W[i, k] * W[i, k]
            gW[i, k] += 2.0 * lam * W[i, k]
    return data + lam * pen, gc


def enumerate_moments(const double[::1] delta, const double[::1] true_p,
                      const double[::1] eval_p, int estimator):
    """Exact mean/variance of an estimator over all 2**n reveal patterns.

    estimator: 0 naive, 1 IPS, 2 SNIPS. Naive and SNIPS condition on a
    non-empty pattern. Returns (mean, variance, empty_pattern_mass).
    """
    cdef Py_ssize_t n = delta.shape[0]
    cdef long long total = 1LL << n
    cdef long long m
    cdef Py_ssize_t j
    cdef double prob, num, den, x, mean = 0.0, var = 0.0, mass = 0.0, dev
    cdef double empty = 1.0
    cdef double inv_cells = 1.0 / n

    for j in range(n):
        empty *= 1.0 - true_p[j]

    for m in range(total):
        if m == 0 and estimator != 1:
            continue
        prob = 1.0
        num = 0.0
        den = 0.0
        for j in range(n):
            if (m >> j) & 1:
                prob *= true_p[j]
                if estimator == 0:
                    num += delta[j]
                    den += 1.0
                else:
                    num += delta[j] / eval_p[j]
                    den += 1.0 / eval_p[j]
            else:
                prob *= 1.0 - true_p[j]
        if estimator == 1:
            x = num * inv_cells
        else:
            x = num / den
        mean += prob * x
        mass += prob
    if mass <= 0.0:
        return float("nan"), float("nan"), empty
    mean /= mass

    for m in range(total):
        if m == 0 and estimator != 1:
            continue
        prob = 1.0
        num = 0.0
        den = 0.0
        for j in range(n):
            if (m >> j) & 1:
                prob *= true_p[j]
                if estimator == 0:
                    num += delta[j]
                    den += 1.0
                else:
                    num += delta[j] / eval_p[j]
                    den += 1.0 / eval_p[j]
            else:
                prob *= 1.0 - true_p[j]
        if estimator == 1:
            x = num * inv_cells
        else:
            x = num / den
        dev = x - mean
        var += prob * dev * dev
    return mean, var / mass, empty
