# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled projection kernels.

Must stay in lockstep with ``_pykernels``: same row selection, same
compensated update.  Built without ``-ffast-math`` and with FP contraction
off, otherwise the error-free transformations below are silently wrong.
"""
from libc.math cimport fma, sqrt

name = "compiled"


cdef inline Py_ssize_t _pick(const double[::1] cumw, double target) noexcept nogil:
    # first index with cumw[idx] > target, clamped to the last row
    cdef Py_ssize_t lo = 0
    cdef Py_ssize_t hi = cumw.shape[0] - 1
    cdef Py_ssize_t mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if cumw[mid] > target:
            hi = mid
        else:
            lo = mid + 1
    return lo


cdef inline double _row_residual(const double[:, ::1] A, Py_ssize_t i, double bi,
                                 const double[::1] hi, const double[::1] lo) noexcept nogil:
    # b_i - <a_i, hi + lo> by compensated dot product (Dot2)
    cdef Py_ssize_t j, n = A.shape[1]
    cdef double s = bi, comp = 0.0, p, pe, t, z, a
    for j in range(n):
        a = A[i, j]
        p = a * hi[j]
        pe = fma(a, hi[j], -p)
        t = s - p
        z = t - s
        comp += (s - (t - z)) + (-p - z)
        s = t
        comp -= pe + a * lo[j]
    return s + comp


cdef inline void _update(const double[:, ::1] A, Py_ssize_t i, double c,
                         double[::1] hi, double[::1] lo) noexcept nogil:
    cdef Py_ssize_t j, n = A.shape[1]
    cdef double d, t, z, e, h
    for j in range(n):
        d = c * A[i, j]
        h = hi[j]
        t = h + d
        z = t - h
        e = (h - (t - z)) + (d - z)
        e = e + lo[j]
        h = t + e
        z = h - t
        lo[j] = (t - (h - z)) + (e - z)
        hi[j] = h


cdef inline double _err_norm(const double[::1] hi, const double[::1] lo,
                             const double[::1] truth) noexcept nogil:
    cdef Py_ssize_t j
    cdef double acc = 0.0, d
    for j in range(hi.shape[0]):
        d = (hi[j] - truth[j]) + lo[j]
        acc += d * d
    return sqrt(acc)


cdef inline double _x_norm(const double[::1] hi, const double[::1] lo) noexcept nogil:
    cdef Py_ssize_t j
    cdef double acc = 0.0, d
    for j in range(hi.shape[0]):
        d = hi[j] + lo[j]
        acc += d * d
    return sqrt(acc)


cdef inline double _res_norm(const double[:, ::1] A, const double[::1] b,
                             const double[::1] hi, const double[::1] lo) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef double acc = 0.0, r
    for i in range(A.shape[0]):
        r = -b[i]
        for j in range(A.shape[1]):
            r += A[i, j] * (hi[j] + lo[j])
        acc += r * r
    return sqrt(acc)


def advance(const double[:, ::1] A, const double[::1] b, const double[::1] row_norms_sq,
            const double[::1] cumw, double[::1] hi, double[::1] lo,
            const double[::1] uniforms, const double[::1] truth, double floor,
            long long[::1] rows_out, double[::1] err_out, double[::1] xnorm_out):
    """Run ``len(uniforms)`` projections in place; return the number done.

    Stops early, after recording, once the error drops to ``floor``.
    ``truth`` may be empty, in which case ``err_out`` is left untouched.
    """
    cdef Py_ssize_t s, i, steps = uniforms.shape[0]
    cdef Py_ssize_t done = steps
    cdef double total = cumw[cumw.shape[0] - 1]
    cdef double c, err
    cdef bint has_truth = truth.shape[0] > 0
    with nogil:
        for s in range(steps):
            i = _pick(cumw, uniforms[s] * total)
            c = _row_residual(A, i, b[i], hi, lo) / row_norms_sq[i]
            _update(A, i, c, hi, lo)
            rows_out[s] = i
            xnorm_out[s] = _x_norm(hi, lo)
            if has_truth:
                err = _err_norm(hi, lo, truth)
                err_out[s] = err
                if err <= floor:
                    done = s + 1
                    break
    return done


def advance_batch(const double[:, ::1] A, const double[::1] b, const double[::1] row_norms_sq,
                  const double[::1] cumw, double[:, ::1] Hi, double[:, ::1] Lo,
                  const double[:, ::1] U, const double[::1] truth, double floor,
                  double[:, ::1] err_out, double[:, ::1] xnorm_out, double[:, ::1] res_out,
                  long long[::1] hit_out):
    """Independent runs, one per row of ``Hi``/``U``; column 0 of the outputs is the start.

    A trial that reaches ``floor`` is frozen and its last values repeated.
    ``res_out`` with zero rows disables residual recording.
    """
    cdef Py_ssize_t t, s, i, k = U.shape[1]
    cdef double total = cumw[cumw.shape[0] - 1]
    cdef double c, err, xn, res = 0.0
    cdef bint want_res = res_out.shape[0] > 0
    with nogil:
        for t in range(U.shape[0]):
            hit_out[t] = -1
            err = _err_norm(Hi[t], Lo[t], truth)
            xn = _x_norm(Hi[t], Lo[t])
            if want_res:
                res = _res_norm(A, b, Hi[t], Lo[t])
            err_out[t, 0] = err
            xnorm_out[t, 0] = xn
            if want_res:
                res_out[t, 0] = res
            for s in range(k):
                if hit_out[t] < 0:
                    i = _pick(cumw, U[t, s] * total)
                    c = _row_residual(A, i, b[i], Hi[t], Lo[t]) / row_norms_sq[i]
                    _update(A, i, c, Hi[t], Lo[t])
                    err = _err_norm(Hi[t], Lo[t], truth)
                    xn = _x_norm(Hi[t], Lo[t])
                    if want_res:
                        res = _res_norm(A, b, Hi[t], Lo[t])
                    if err <= floor:
                        hit_out[t] = s + 1
                err_out[t, s + 1] = err
                xnorm_out[t, s + 1] = xn
                if want_res:
                    res_out[t, s + 1] = res
    return None


def row_defects(const double[:, ::1] A, const double[::1] b, const double[::1] x):
    """Accurate ``b - A @ x`` (compensated per row)."""
    cdef Py_ssize_t i, m = A.shape[0]
    cdef double[::1] zero
    import numpy as np
    out = np.empty(m)
    cdef double[::1] o = out
    zero_arr = np.zeros(A.shape[1])
    zero = zero_arr
    for i in range(m):
        o[i] = _row_residual(A, i, b[i], x, zero)
    return out
