"""Brute-force reference implementations used by the tests."""
import numpy as np


def parabola_nearest(px, pt, alpha, offset=0.0, n_grid=4001, newton=30):
    """Nearest point of ``{pt >= alpha |px|^2 - offset}`` by search along the boundary.

    The projection of an infeasible point keeps the direction of ``px``, so
    the search is over the radius ``r`` in ``[0, |px|]`` of boundary points
    ``(r * e, alpha r^2 - offset)``: a dense grid, then Newton polishing.
    """
    px = np.atleast_2d(np.asarray(px, dtype=float))
    pt = np.asarray(pt, dtype=float).ravel()
    a = np.linalg.norm(px, axis=1)
    y = pt + offset
    ts = np.linspace(0.0, 1.0, n_grid)
    r = a[:, None] * ts[None, :]
    obj = (r - a[:, None]) ** 2 + (alpha * r * r - y[:, None]) ** 2
    rb = r[np.arange(len(a)), np.argmin(obj, axis=1)]
    for _ in range(newton):
        g = (rb - a) + 2 * alpha * rb * (alpha * rb * rb - y)
        h = 1 + 2 * alpha * (3 * alpha * rb * rb - y)
        step = np.where(h > 0, g / np.where(h > 0, h, 1.0), 0.0)
        rb = np.clip(rb - step, 0.0, a)
    feasible = y >= alpha * a * a
    with np.errstate(invalid="ignore", divide="ignore"):
        e = np.where(a[:, None] > 0, px / a[:, None], 0.0)
    qx = np.where(feasible[:, None], px, e * rb[:, None])
    qt = np.where(feasible, pt, alpha * rb * rb - offset)
    return qx, qt


def two_piece_fit(y):
    """Least-squares piecewise constant fit with one break: ``(k, left, right)``.

    ``k`` is the first index of the right piece.
    """
    y = np.asarray(y, dtype=float)
    n = len(y)
    cs = np.concatenate([[0.0], np.cumsum(y)])
    cs2 = np.concatenate([[0.0], np.cumsum(y * y)])
    best = None
    for k in range(1, n):
        sl, sr = cs[k], cs[n] - cs[k]
        sse = cs2[n] - sl * sl / k - sr * sr / (n - k)
        if best is None or sse < best[0]:
            best = (sse, k, sl / k, sr / (n - k))
    return best[1:]
