"""Pure numpy fallback for the projection kernels.

Same signatures and the same arithmetic as the compiled module: rows are
picked by binary search on ``u * total``, the iterate is kept as an
unevaluated sum ``hi + lo`` and the row residual is evaluated with
error-free transformations.  The single-run path sums the residual terms
with :func:`math.fsum`; the batch path uses Dot2 across trials.
"""
import math

import numpy as np

name = "python"

_SPLIT = 134217729.0  # 2**27 + 1


def _two_sum(a, b):
    s = a + b
    z = s - a
    return s, (a - (s - z)) + (b - z)


def _two_prod_err(a, b, p):
    # exact error of p = a*b via Dekker splitting (no fma in numpy)
    t = _SPLIT * a
    ah = t - (t - a)
    al = a - ah
    t = _SPLIT * b
    bh = t - (t - b)
    bl = b - bh
    return ((ah * bh - p) + ah * bl + al * bh) + al * bl


def _pick(cumw, u):
    return np.minimum(np.searchsorted(cumw, u * cumw[-1], side="right"), cumw.shape[0] - 1)


def _row_residual(a, bi, hi, lo):
    p = a * hi
    pe = _two_prod_err(a, hi, p)
    terms = [bi]
    terms += (-p).tolist()
    terms += (-pe).tolist()
    terms += (-(a * lo)).tolist()
    return math.fsum(terms)


def _update(hi, lo, c, a):
    t, e = _two_sum(hi, c * a)
    e = e + lo
    h, l = _two_sum(t, e)
    hi[...] = h
    lo[...] = l


def advance(A, b, row_norms_sq, cumw, hi, lo, uniforms, truth, floor,
            rows_out, err_out, xnorm_out):
    rows = _pick(cumw, np.asarray(uniforms))
    has_truth = truth.shape[0] > 0
    for s, i in enumerate(rows.tolist()):
        a = A[i]
        c = _row_residual(a, b[i], hi, lo) / row_norms_sq[i]
        _update(hi, lo, c, a)
        rows_out[s] = i
        xnorm_out[s] = math.sqrt(float(np.dot(hi + lo, hi + lo)))
        if has_truth:
            d = (hi - truth) + lo
            err = math.sqrt(float(np.dot(d, d)))
            err_out[s] = err
            if err <= floor:
                return s + 1
    return len(rows)


def _norms(A, b, Hi, Lo, truth, want_res):
    d = (Hi - truth) + Lo
    err = np.sqrt(np.einsum("ij,ij->i", d, d))
    x = Hi + Lo
    xn = np.sqrt(np.einsum("ij,ij->i", x, x))
    res = None
    if want_res:
        r = x @ A.T - b
        res = np.sqrt(np.einsum("ij,ij->i", r, r))
    return err, xn, res


def advance_batch(A, b, row_norms_sq, cumw, Hi, Lo, U, truth, floor,
                  err_out, xnorm_out, res_out, hit_out):
    T, k = U.shape
    n = A.shape[1]
    want_res = res_out.shape[0] > 0
    rows_all = _pick(cumw, U)
    hit_out[:] = -1
    active = np.ones(T, dtype=bool)

    err, xn, res = _norms(A, b, Hi, Lo, truth, want_res)
    err_out[:, 0] = err
    xnorm_out[:, 0] = xn
    if want_res:
        res_out[:, 0] = res

    for s in range(k):
        idx = np.flatnonzero(active)
        if idx.size:
            rows = rows_all[idx, s]
            Ar = A[rows]
            hi = Hi[idx]
            lo = Lo[idx]
            acc = b[rows].copy()
            comp = np.zeros(idx.size)
            for j in range(n):
                a = Ar[:, j]
                p = a * hi[:, j]
                pe = _two_prod_err(a, hi[:, j], p)
                acc, e = _two_sum(acc, -p)
                comp += e
                comp -= pe + a * lo[:, j]
            c = (acc + comp) / row_norms_sq[rows]
            _update(hi, lo, c[:, None], Ar)
            Hi[idx] = hi
            Lo[idx] = lo

            e_new, x_new, r_new = _norms(A, b, hi, lo, truth, want_res)
            err[idx] = e_new
            xn[idx] = x_new
            if want_res:
                res[idx] = r_new
            newly = idx[e_new <= floor]
            hit_out[newly] = s + 1
            active[newly] = False
        err_out[:, s + 1] = err
        xnorm_out[:, s + 1] = xn
        if want_res:
            res_out[:, s + 1] = res
    return None


def row_defects(A, b, x):
    zero = np.zeros_like(x)
    return np.array([_row_residual(A[i], b[i], x, zero) for i in range(A.shape[0])])
