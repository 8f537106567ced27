# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops; ``_kernels_py`` mirrors every function here."""

from libc.math cimport cos, fabs, sin, sqrt

import numpy as np


def adc_scan(const float[:, ::1] lut, const int[:, ::1] codes):
    """score[i] = lut[0, codes[i, 0]] + ... + lut[m-1, codes[i, m-1]] in float32."""
    cdef Py_ssize_t n = codes.shape[0]
    cdef Py_ssize_t m = codes.shape[1]
    cdef Py_ssize_t i, j
    cdef float acc
    out = np.empty(n, dtype=np.float32)
    cdef float[::1] res = out
    if m == 0:
        out[:] = 0
        return out
    with nogil:
        for i in range(n):
            acc = lut[0, codes[i, 0]]
            for j in range(1, m):
                acc = acc + lut[j, codes[i, j]]
            res[i] = acc
    return out


def adc_scan_scaled(const float[:, ::1] eta, const int[:, ::1] codes,
                    const float[:, ::1] alphas):
    """score[i] = sum_j eta[j, codes[i, j]] * alphas[i, j] (lookup-multiply-add)."""
    cdef Py_ssize_t n = codes.shape[0]
    cdef Py_ssize_t m = codes.shape[1]
    cdef Py_ssize_t i, j
    cdef float acc, term
    out = np.empty(n, dtype=np.float32)
    cdef float[::1] res = out
    if m == 0:
        out[:] = 0
        return out
    with nogil:
        for i in range(n):
            acc = eta[0, codes[i, 0]] * alphas[i, 0]
            for j in range(1, m):
                term = eta[j, codes[i, j]] * alphas[i, j]
                acc = acc + term
            res[i] = acc
    return out


def power_iteration(const double[:, ::1] gram, const double[::1] start,
                    int max_iters, double tol):
    """Top eigenpair of a symmetric PSD matrix by power iteration.

    Stops when the eigen-residual |G v - lam v| is at most ``tol * lam``; this
    also bounds the Rayleigh-quotient change, which converges twice as fast as
    the vector itself.
    Returns (eigenvalue, unit vector).
    """
    cdef Py_ssize_t d = gram.shape[0]
    cdef Py_ssize_t r, c
    cdef int it
    cdef double nrm, lam, lam_new, acc, res
    v_arr = np.array(start, dtype=np.float64)
    w_arr = np.empty(d, dtype=np.float64)
    cdef double[::1] v = v_arr
    cdef double[::1] w = w_arr
    with nogil:
        lam = 0.0
        for r in range(d):
            acc = 0.0
            for c in range(d):
                acc = acc + gram[r, c] * v[c]
            w[r] = acc
            lam = lam + v[r] * acc
        for it in range(max_iters):
            nrm = 0.0
            for r in range(d):
                nrm = nrm + w[r] * w[r]
            nrm = sqrt(nrm)
            if nrm == 0.0:
                break
            for r in range(d):
                v[r] = w[r] / nrm
            lam_new = 0.0
            for r in range(d):
                acc = 0.0
                for c in range(d):
                    acc = acc + gram[r, c] * v[c]
                w[r] = acc
                lam_new = lam_new + v[r] * acc
            res = 0.0
            for r in range(d):
                res = res + (w[r] - lam_new * v[r]) * (w[r] - lam_new * v[r])
            lam = lam_new
            if sqrt(res) <= tol * fabs(lam_new):
                break
    return lam, v_arr


def sin_power_simpson(const double[::1] theta, const long[::1] powers, int panels):
    """Composite-Simpson integrals of sin^p over [0, theta[i]] for each power.

    ``powers`` must be sorted ascending. Returns shape (len(powers), len(theta)).
    Grid sines come from the angle-addition recurrence, restarted from libm
    every 32 nodes so the drift stays at a few ulps.
    """
    cdef Py_ssize_t n = theta.shape[0]
    cdef Py_ssize_t P = powers.shape[0]
    cdef Py_ssize_t i, g, r
    cdef long e, have
    cdef double h, sn, cs, sh, ch, tmp, cur, wg
    out_arr = np.zeros((P, n), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    with nogil:
        for i in range(n):
            h = theta[i] / panels
            sh = sin(h)
            ch = cos(h)
            sn = 0.0
            cs = 1.0
            for g in range(panels + 1):
                if g % 32 == 0:
                    sn = sin(g * h)
                    cs = cos(g * h)
                if g == 0 or g == panels:
                    wg = 1.0
                elif g % 2 == 1:
                    wg = 4.0
                else:
                    wg = 2.0
                cur = 1.0
                have = 0
                for r in range(P):
                    e = powers[r]
                    while have < e:
                        cur = cur * sn
                        have = have + 1
                    out[r, i] = out[r, i] + wg * cur
                tmp = sn * ch + cs * sh
                cs = cs * ch - sn * sh
                sn = tmp
            for r in range(P):
                out[r, i] = out[r, i] * h / 3.0
    return out_arr


def assign_quadratic(const double[::1] w, const double[::1] a, const double[::1] b,
                     const double[:, ::1] lam):
    """For each row r of ``lam`` and point i: argmin_l w[i]*lam[r,l]^2 + a[i]*lam[r,l] + b[i].

    Ties go to the lowest slot. Returns (labels int64 (R, n), minima (R, n)).
    """
    cdef Py_ssize_t R = lam.shape[0]
    cdef Py_ssize_t s = lam.shape[1]
    cdef Py_ssize_t n = w.shape[0]
    cdef Py_ssize_t r, i, l
    cdef double v, best, x
    cdef long arg
    lab_arr = np.empty((R, n), dtype=np.int64)
    min_arr = np.empty((R, n), dtype=np.float64)
    cdef long long[:, ::1] lab = lab_arr
    cdef double[:, ::1] mins = min_arr
    with nogil:
        for r in range(R):
            for i in range(n):
                x = lam[r, 0]
                best = (w[i] * x + a[i]) * x + b[i]
                arg = 0
                for l in range(1, s):
                    x = lam[r, l]
                    v = (w[i] * x + a[i]) * x + b[i]
                    if v < best:
                        best = v
                        arg = l
                lab[r, i] = arg
                mins[r, i] = best
    return lab_arr, min_arr
