# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: rotated Clayton log-densities, bivariate h-functions,
conditional means and the constrained eta sweep.

Semantics match ``_kernels_py`` exactly; see that module for reference.
"""

import numpy as np

from libc.math cimport log, log1p, exp, expm1, lgamma, INFINITY, isinf
from libc.stdint cimport int64_t

cdef double OVERFLOW_GUARD = 700.0


cdef inline double _clamp(double x, double lo, double hi) noexcept nogil:
    if x < lo:
        return lo
    if x > hi:
        return hi
    return x


cdef double _log_gen_sum(double* a, int m) noexcept nogil:
    # log(sum exp(a_l) - (m - 1)), a_l >= 0
    cdef double big = 0.0, s = 0.0
    cdef int l
    for l in range(m):
        if a[l] > big:
            big = a[l]
    if isinf(big):
        return INFINITY
    if big < OVERFLOW_GUARD:
        for l in range(m):
            s += expm1(a[l])
        return log1p(s)
    for l in range(m):
        s += exp(a[l] - big)
    return big + log(s - (m - 1) * exp(-big))


def rotated_logpdf(const double[:, ::1] u, const int64_t[::1] comp,
                   const double[::1] theta, double eps, double indep_tol):
    cdef Py_ssize_t n = u.shape[0], i
    cdef int m = <int>u.shape[1], l, k
    out_arr = np.empty(n, dtype=np.float64)
    buf_arr = np.empty(m, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef double[::1] buf = buf_arr
    cdef double th, x, lx, slog, gen, const
    cdef int64_t c
    with nogil:
        for i in range(n):
            th = theta[i]
            if th < indep_tol:
                out[i] = 0.0
                continue
            c = comp[i]
            slog = 0.0
            for l in range(m):
                x = u[i, l]
                if (c >> l) & 1:
                    x = 1.0 - x
                x = _clamp(x, eps, 1.0 - eps)
                lx = log(x)
                slog += lx
                buf[l] = -th * lx
            gen = _log_gen_sum(&buf[0], m)
            const = 0.0
            for k in range(1, m):
                const += log1p(k * th)
            out[i] = (-1.0 / th - m) * gen + const - (th + 1.0) * slog
    return out_arr


cdef inline double _h00(double u, double v, double th) noexcept nogil:
    cdef double a[2]
    cdef double lu = log(u)
    if v <= 0.0:
        return 0.0
    a[0] = -th * lu
    a[1] = -th * log(v)
    return exp(-(th + 1.0) * lu + (-1.0 / th - 1.0) * _log_gen_sum(a, 2))


cdef inline double _hfunc1(double ug, double v, int64_t c, double th,
                           double eps, double indep_tol) noexcept nogil:
    cdef double uu, vv, h
    ug = _clamp(ug, eps, 1.0 - eps)
    v = _clamp(v, 0.0, 1.0)
    uu = 1.0 - ug if (c & 1) else ug
    vv = 1.0 - v if (c & 2) else v
    if th < indep_tol:
        h = vv
    else:
        h = _h00(uu, vv, th)
    if c & 2:
        return 1.0 - h
    return h


def hfunc(u_given, v, comp, theta, double eps, double indep_tol):
    ug_b, v_b, c_b, th_b = np.broadcast_arrays(
        np.asarray(u_given, dtype=np.float64), np.asarray(v, dtype=np.float64),
        np.asarray(comp, dtype=np.int64), np.asarray(theta, dtype=np.float64))
    shape = ug_b.shape
    cdef const double[::1] ug = np.ascontiguousarray(ug_b).ravel()
    cdef const double[::1] vv = np.ascontiguousarray(v_b).ravel()
    cdef const int64_t[::1] cc = np.ascontiguousarray(c_b).ravel()
    cdef const double[::1] tt = np.ascontiguousarray(th_b).ravel()
    out_arr = np.empty(ug.shape[0], dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i
    with nogil:
        for i in range(ug.shape[0]):
            out[i] = _hfunc1(ug[i], vv[i], cc[i], tt[i], eps, indep_tol)
    return out_arr.reshape(shape)


def cond_mean(const double[::1] u_given, const int64_t[::1] comp,
              const double[::1] theta, int n_grid, double eps, double indep_tol):
    cdef Py_ssize_t n = u_given.shape[0], i
    cdef int g
    cdef double acc, v
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    with nogil:
        for i in range(n):
            acc = 0.0
            for g in range(n_grid):
                v = (g + 0.5) / n_grid
                acc += 1.0 - _hfunc1(u_given[i], v, comp[i], theta[i], eps, indep_tol)
            out[i] = acc / n_grid
    return out_arr


def eta_sweep(int64_t[:, ::1] eta, int64_t[:, ::1] sums, const double[:, ::1] log_w,
              const double[::1] alpha, const int64_t[::1] inv_ptr,
              const int64_t[::1] inv_idx, const double[:, ::1] uniforms):
    cdef Py_ssize_t n_times = eta.shape[0], n_comp = eta.shape[1]
    cdef Py_ssize_t last = n_comp - 1
    cdef Py_ssize_t t, j, r, l
    cdef int64_t total, cur_j, cur_last, x, y, dx, max_total = 0
    cdef double val, best, acc, target
    # total for any component pair is bounded by the row sum
    for t in range(n_times):
        acc = 0
        for j in range(n_comp):
            acc += eta[t, j]
        if acc > max_total:
            max_total = <int64_t>acc
    logp_arr = np.empty(max_total + 1, dtype=np.float64)
    cdef double[::1] logp = logp_arr
    with nogil:
        for t in range(n_times):
            for j in range(last):
                cur_j = eta[t, j]
                cur_last = eta[t, last]
                total = cur_j + cur_last
                if total == 0:
                    continue
                best = -INFINITY
                for x in range(total + 1):
                    y = total - x
                    val = (x * log_w[t, j] - lgamma(x + 1.0)
                           + y * log_w[t, last] - lgamma(y + 1.0))
                    for r in range(inv_ptr[t], inv_ptr[t + 1]):
                        l = inv_idx[r]
                        val -= lgamma(alpha[j] + sums[l, j] - cur_j + x)
                        val -= lgamma(alpha[last] + sums[l, last] - cur_last + y)
                    logp[x] = val
                    if val > best:
                        best = val
                acc = 0.0
                for x in range(total + 1):
                    logp[x] = exp(logp[x] - best)
                    acc += logp[x]
                target = uniforms[t, j] * acc
                acc = 0.0
                x = 0
                while x < total:
                    acc += logp[x]
                    if acc > target:
                        break
                    x += 1
                dx = x - cur_j
                if dx != 0:
                    eta[t, j] = x
                    eta[t, last] = total - x
                    for r in range(inv_ptr[t], inv_ptr[t + 1]):
                        l = inv_idx[r]
                        sums[l, j] += dx
                        sums[l, last] -= dx
