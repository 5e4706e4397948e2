"""NumPy implementation of the primal-dual iteration.

Same signature, layout and update order as the compiled ``pd_steps``; used
when the extension is unavailable or ``FDR_BACKEND=python`` is set.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np

from .projections import parabola_components


@lru_cache(maxsize=8)
def _pair_tables(S: int):
    s1, s2 = np.triu_indices(S)
    first = np.zeros((len(s1), S))
    first[np.arange(len(s1)), s1] = 1.0
    second = np.zeros((len(s1), S))
    second[np.arange(len(s1)), s2] = 1.0
    return s1, s2, first, second


def _spatial_last(strides, dims, C):
    c = np.arange(C)
    return [((c // strides[j]) % dims[j]) == dims[j] - 1 for j in range(len(dims))]


def pd_steps(v, vb, p, s, mu, mub, alpha, offset, sigx, kappa, taumu, scales,
             strides, dims, tau, sigt, sigs, radius, n_steps):
    """Run ``n_steps`` primal-dual iterations in place."""
    C, S = v.shape
    d = p.shape[0] - 1
    s1, s2, first, second = _pair_tables(S)
    last = _spatial_last(strides, dims, C)
    kap = kappa[None, :-1]
    al = alpha[:, None]
    for _ in range(n_steps):
        # per-level aggregate of mub over pairs containing the level
        row = np.einsum("cid,is->csd", mub, first)
        col = np.einsum("cid,is->csd", mub, second)
        ptil = np.cumsum(row, axis=1)
        ptil[:, 1:] -= np.cumsum(col, axis=1)[:, :-1]

        px = np.empty((d, C, S - 1))
        for j in range(d):
            g = np.zeros((C, S - 1))
            nb = np.arange(C) + strides[j]
            ok = ~last[j]
            g[ok] = scales[j] * (vb[nb[ok], :-1] - vb[ok, :-1])
            px[j] = p[j, :, :-1] + sigx[None, :-1] * (g + ptil[:, :-1, j])
            px[j][last[j]] = 0.0
        gt = scales[d] * (vb[:, 1:] - vb[:, :-1])
        pt = kap * (p[d, :, :-1] + sigt * gt)
        qx, qt = parabola_components(px, pt, kap * al, kap * offset[:, :-1])
        p[:d, :, :-1] = qx
        p[d, :, :-1] = qt / kap
        p[:, :, -1] = 0.0

        s -= sigs * mub
        nrm = np.sqrt(np.sum(s * s, axis=2, keepdims=True))
        over = nrm > radius
        s[:] = np.where(over, s * (radius / np.where(over, nrm, 1.0)), s)

        pref = np.zeros((C, S + 1, d))
        np.cumsum(np.moveaxis(p[:d], 0, -1), axis=1, out=pref[:, 1:])
        sums = pref[:, s2 + 1] - pref[:, s1]
        mu_old = mu.copy()
        mu += taumu[None, :, None] * (s - sums)
        mub[:] = 2.0 * mu - mu_old

        acc = np.zeros((C, S))
        for j in range(d):
            pj = scales[j] * p[j]
            acc -= pj
            ok = ~last[j]
            nb = np.arange(C)[ok] + strides[j]
            acc[nb] += pj[ok]
        pt_s = scales[d] * p[d]
        acc -= pt_s
        acc[:, 1:] += pt_s[:, :-1]
        v_old = v.copy()
        np.clip(v - tau * acc, 0.0, 1.0, out=v)
        v[:, 0] = 1.0
        v[:, -1] = 0.0
        vb[:] = 2.0 * v - v_old
