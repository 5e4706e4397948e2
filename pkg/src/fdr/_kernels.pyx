# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled primal-dual iteration.

Array layout (C order, spatial cells flattened to ``c``):

* ``v``, ``vb``: ``(C, S)``
* ``p``: ``(d + 1, C, S)``; components ``0..d-1`` are spatial, ``d`` is lifted
* ``s``, ``mu``, ``mub``: ``(C, I, d)`` with pairs ordered ``s1`` outer,
  ``s2 >= s1`` inner
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, cbrt, acos, cos, fabs

cnp.import_array()


cdef inline double _cubic_root(double a, double b) noexcept nogil:
    cdef double rb, rb3, disc, c, c2, q
    if b >= 0.0:
        disc = a * a + b * b * b
        c = cbrt(a + sqrt(disc))
        if fabs(c) < 1e-14:
            return 0.0
        c2 = c * c
        return 2.0 * a / (c2 + b + b * b / c2)
    rb = sqrt(-b)
    rb3 = rb * rb * rb
    disc = (a - rb3) * (a + rb3)
    if disc >= 0.0:
        c = cbrt(a + sqrt(disc))
        if fabs(c) < 1e-14:
            return 0.0
        return c - b / c
    q = a / rb3
    if q > 1.0:
        q = 1.0
    elif q < -1.0:
        q = -1.0
    return 2.0 * rb * cos(acos(q) / 3.0)


cdef inline void _project_parabola(double *x, int d, double *t, double alpha,
                                   double offset) noexcept nogil:
    """In-place projection of ``(x, t)`` onto ``t >= alpha |x|^2 - offset``."""
    cdef double n2 = 0.0, nrm, w, y, scale
    cdef int j
    for j in range(d):
        n2 += x[j] * x[j]
    y = t[0] + offset
    if y >= alpha * n2:
        return
    nrm = sqrt(n2)
    w = _cubic_root(2.0 * alpha * nrm, (2.0 / 3.0) * (1.0 - 2.0 * alpha * y))
    if nrm > 0.0:
        scale = w / (2.0 * alpha * nrm)
    else:
        scale = 0.0
    n2 = 0.0
    for j in range(d):
        x[j] *= scale
        n2 += x[j] * x[j]
    t[0] = alpha * n2 - offset


# Pair updates for one cell: s <- ball(s - sigs * mub); mu <- mu + taumu * (s - sum p_x);
# mub <- 2 mu - mu_old; row/col sums of the new mub accumulate for the next p step.
# The d = 1 and d = 2 loops are branch-free so the compiler can vectorize them.

cdef inline void _pairs_d1(double *sp, double *mp, double *mbp, const double *pf,
                           double *rw, double *cl, const double *taumu, int S,
                           double sigs, double radius) noexcept nogil:
    cdef Py_ssize_t k = 0, s1, s2
    cdef double x, mo, mn, acc, base
    for s1 in range(S):
        acc = 0.0
        base = pf[s1]
        for s2 in range(s1, S):
            x = sp[k] - sigs * mbp[k]
            x = x if x < radius else radius
            x = x if x > -radius else -radius
            sp[k] = x
            mo = mp[k]
            mn = mo + taumu[k] * (x - (pf[s2 + 1] - base))
            mp[k] = mn
            mn = 2.0 * mn - mo
            mbp[k] = mn
            acc += mn
            cl[s2] += mn
            k += 1
        rw[s1] += acc


cdef inline void _pairs_d2(double *sp, double *mp, double *mbp, const double *pf,
                           double *rw, double *cl, const double *taumu, int S,
                           double sigs, double radius) noexcept nogil:
    cdef Py_ssize_t k = 0, s1, s2, q
    cdef double x0, x1, n2, fac, mo, mn, acc0, acc1, b0, b1, r2 = radius * radius
    for s1 in range(S):
        acc0 = 0.0
        acc1 = 0.0
        b0 = pf[2 * s1]
        b1 = pf[2 * s1 + 1]
        for s2 in range(s1, S):
            q = 2 * k
            x0 = sp[q] - sigs * mbp[q]
            x1 = sp[q + 1] - sigs * mbp[q + 1]
            n2 = x0 * x0 + x1 * x1
            fac = radius / sqrt(n2) if n2 > r2 else 1.0
            x0 = x0 * fac
            x1 = x1 * fac
            sp[q] = x0
            sp[q + 1] = x1
            mo = mp[q]
            mn = mo + taumu[k] * (x0 - (pf[2 * s2 + 2] - b0))
            mp[q] = mn
            mn = 2.0 * mn - mo
            mbp[q] = mn
            acc0 += mn
            cl[2 * s2] += mn
            mo = mp[q + 1]
            mn = mo + taumu[k] * (x1 - (pf[2 * s2 + 3] - b1))
            mp[q + 1] = mn
            mn = 2.0 * mn - mo
            mbp[q + 1] = mn
            acc1 += mn
            cl[2 * s2 + 1] += mn
            k += 1
        rw[2 * s1] += acc0
        rw[2 * s1 + 1] += acc1


cdef inline void _pairs_any(double *sp, double *mp, double *mbp, const double *pf,
                            double *rw, double *cl, const double *taumu, int S, int d,
                            double sigs, double radius) noexcept nogil:
    cdef Py_ssize_t k = 0, s1, s2, q
    cdef int j
    cdef double nrm2, fac, mo, mn, r2 = radius * radius
    for s1 in range(S):
        for s2 in range(s1, S):
            q = k * d
            nrm2 = 0.0
            for j in range(d):
                sp[q + j] -= sigs * mbp[q + j]
                nrm2 += sp[q + j] * sp[q + j]
            if nrm2 > r2:
                fac = radius / sqrt(nrm2)
                for j in range(d):
                    sp[q + j] *= fac
            for j in range(d):
                mo = mp[q + j]
                mn = mo + taumu[k] * (sp[q + j] - (pf[(s2 + 1) * d + j] - pf[s1 * d + j]))
                mp[q + j] = mn
                mn = 2.0 * mn - mo
                mbp[q + j] = mn
                rw[s1 * d + j] += mn
                cl[s2 * d + j] += mn
            k += 1


def cubic_root(double a, double b):
    """Scalar entry point to the compiled cubic solver (for testing)."""
    return _cubic_root(a, b)


def pd_steps(double[:, ::1] v, double[:, ::1] vb, double[:, :, ::1] p,
             double[:, :, ::1] s, double[:, :, ::1] mu, double[:, :, ::1] mub,
             const double[::1] alpha, const double[:, ::1] offset,
             const double[::1] sigx, const double[::1] kappa,
             const double[::1] taumu, const double[::1] scales,
             const long[::1] strides, const long[::1] dims,
             double tau, double sigt, double sigs, double radius, int n_steps):
    """Run ``n_steps`` primal-dual iterations in place."""
    cdef Py_ssize_t C = v.shape[0]
    cdef int S = <int>v.shape[1]
    cdef int d = <int>p.shape[0] - 1
    cdef Py_ssize_t I = s.shape[1]
    cdef Py_ssize_t c, cn, k, q
    cdef int l, j, s1, s2, it
    cdef double gt, kap, tval, vo, vn, acc
    cdef double st = scales[d]
    cdef double *sp
    cdef double *mp
    cdef double *mbp
    cdef double *rw
    cdef double *cl
    cdef double *pf

    cdef double[:, :, ::1] row = np.zeros((C, S, d))
    cdef double[:, :, ::1] col = np.zeros((C, S, d))
    cdef double[:, ::1] pref = np.zeros((S + 1, d))
    cdef double[::1] ptil = np.zeros(d)
    cdef double[::1] xbuf = np.zeros(d)
    cdef long[::1] coord = np.zeros(d, dtype=np.int64)
    cdef long[::1] last = np.zeros(d, dtype=np.int64)

    with nogil:
        # row/col sums of mub over pairs, refreshed inside the mu update
        for c in range(C):
            mbp = &mub[c, 0, 0]
            rw = &row[c, 0, 0]
            cl = &col[c, 0, 0]
            k = 0
            for s1 in range(S):
                for s2 in range(s1, S):
                    for j in range(d):
                        rw[s1 * d + j] += mbp[k * d + j]
                        cl[s2 * d + j] += mbp[k * d + j]
                    k += 1
        for it in range(n_steps):
            # dual pass: p, s and mu are all local to a spatial cell
            for c in range(C):
                rw = &row[c, 0, 0]
                cl = &col[c, 0, 0]
                pf = &pref[0, 0]
                for j in range(d):
                    coord[j] = (c // strides[j]) % dims[j]
                    last[j] = coord[j] == dims[j] - 1
                    ptil[j] = 0.0
                    pf[j] = 0.0
                for l in range(S):
                    for j in range(d):
                        # sum of mub over pairs with s1 <= l <= s2
                        ptil[j] += rw[l * d + j]
                        if l > 0:
                            ptil[j] -= cl[(l - 1) * d + j]
                    if l == S - 1:
                        for j in range(d + 1):
                            p[j, c, l] = 0.0
                    else:
                        kap = kappa[l]
                        for j in range(d):
                            if last[j]:
                                xbuf[j] = 0.0
                            else:
                                cn = c + strides[j]
                                xbuf[j] = p[j, c, l] + sigx[l] * (
                                    scales[j] * (vb[cn, l] - vb[c, l]) + ptil[j])
                        gt = st * (vb[c, l + 1] - vb[c, l])
                        tval = kap * (p[d, c, l] + sigt * gt)
                        _project_parabola(&xbuf[0], d, &tval, kap * alpha[c],
                                          kap * offset[c, l])
                        for j in range(d):
                            p[j, c, l] = xbuf[j]
                        p[d, c, l] = tval / kap
                    for j in range(d):
                        pf[(l + 1) * d + j] = pf[l * d + j] + p[j, c, l]
                for q in range(S * d):
                    rw[q] = 0.0
                    cl[q] = 0.0
                sp = &s[c, 0, 0]
                mp = &mu[c, 0, 0]
                mbp = &mub[c, 0, 0]
                if d == 1:
                    _pairs_d1(sp, mp, mbp, pf, rw, cl, &taumu[0], S, sigs, radius)
                elif d == 2:
                    _pairs_d2(sp, mp, mbp, pf, rw, cl, &taumu[0], S, sigs, radius)
                else:
                    _pairs_any(sp, mp, mbp, pf, rw, cl, &taumu[0], S, d, sigs, radius)
            # primal pass
            for c in range(C):
                for j in range(d):
                    coord[j] = (c // strides[j]) % dims[j]
                for l in range(S):
                    acc = 0.0
                    for j in range(d):
                        if coord[j] > 0:
                            acc += scales[j] * p[j, c - strides[j], l]
                        acc -= scales[j] * p[j, c, l]
                    if l > 0:
                        acc += st * p[d, c, l - 1]
                    acc -= st * p[d, c, l]
                    vo = v[c, l]
                    if l == 0:
                        vn = 1.0
                    elif l == S - 1:
                        vn = 0.0
                    else:
                        vn = vo - tau * acc
                        if vn < 0.0:
                            vn = 0.0
                        elif vn > 1.0:
                            vn = 1.0
                    v[c, l] = vn
                    vb[c, l] = 2.0 * vn - vo
