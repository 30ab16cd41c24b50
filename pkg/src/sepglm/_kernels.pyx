# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels.  Must stay bit-compatible with ``_pykernels``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, sqrt, floor, isfinite, INFINITY
from scipy.special.cython_special cimport ndtri

cnp.import_array()

DEF SMALL_RATE = 30.0


cdef inline long _poisson_inverse(double lam, double u) nogil:
    cdef long k = 0
    cdef double pk, cdf, draw
    if lam <= 0.0:
        return 0
    if lam < SMALL_RATE:
        pk = exp(-lam)
        cdf = pk
        while u > cdf and k < 1000:
            k += 1
            pk = pk * lam / k
            cdf = cdf + pk
        return k
    draw = floor(lam + sqrt(lam) * ndtri(u) + 0.5)
    if draw < 0.0:
        return 0
    return <long>draw


def simulate_counts(const double[::1] history_beta,
                    const double[::1] base_theta,
                    const double[::1] uniforms,
                    double max_rate):
    """Sample counts bin by bin from a history-dependent log-linear rate.

    Returns ``(counts, bad_bin)`` where ``bad_bin`` is -1 on success or the
    first bin whose rate was non-finite or above ``max_rate``.
    """
    cdef Py_ssize_t n = base_theta.shape[0]
    cdef Py_ssize_t p = history_beta.shape[0]
    cdef Py_ssize_t t, j
    cdef double theta, lam
    cdef long c
    counts_arr = np.zeros(n, dtype=np.int64)
    cdef cnp.int64_t[::1] counts = counts_arr
    cdef Py_ssize_t bad = -1
    with nogil:
        for t in range(n):
            theta = base_theta[t]
            if theta == -INFINITY:
                counts[t] = 0
                continue
            for j in range(1, p + 1):
                if j > t:
                    break
                c = counts[t - j]
                if c != 0:
                    if history_beta[j - 1] == -INFINITY:
                        theta = -INFINITY
                        break
                    theta = theta + history_beta[j - 1] * c
            if theta == -INFINITY:
                counts[t] = 0
                continue
            if not isfinite(theta):
                bad = t
                break
            lam = exp(theta)
            if not (lam <= max_rate):
                bad = t
                break
            counts[t] = _poisson_inverse(lam, uniforms[t])
    return counts_arr, bad
