"""Closed-form Euclidean projections used by the primal-dual iteration."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonpositiveCurvature

_C_EPS = 1e-14


@dataclass(frozen=True)
class ParabolaSpec:
    """Feasible set ``{p : p_t >= alpha * |p_x|^2 - offset}``."""

    alpha: float
    offset: float = 0.0

    def __post_init__(self):
        if not np.all(np.asarray(self.alpha) > 0):
            raise NonpositiveCurvature(f"alpha must be positive, got {self.alpha}")


def project_C(v: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
    """Clip to ``[0, 1]`` and pin the first/last lifted level to 1/0."""
    out = np.clip(v, 0.0, 1.0, out=out)
    out[..., 0] = 1.0
    out[..., -1] = 0.0
    return out


def solve_cubic(a, b) -> np.ndarray:
    """Largest real root of ``w^3 + 3 b w - 2 a = 0`` for ``a >= 0``.

    Picks the algebraic form that avoids cancellation: Cardano with a
    rationalized root when ``b >= 0``, plain Cardano when ``b < 0`` and the
    discriminant is nonnegative, and the trigonometric form otherwise.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    a, b = np.broadcast_arrays(a, b)
    w = np.zeros(a.shape)
    with np.errstate(all="ignore"):
        rb = np.sqrt(np.maximum(-b, 0.0))
        rb3 = rb * rb * rb
        disc = np.where(b >= 0, a * a + b * b * b, (a - rb3) * (a + rb3))
        c = np.cbrt(a + np.sqrt(np.maximum(disc, 0.0)))
        c2 = c * c
        pos = b >= 0
        w_pos = 2.0 * a / (c2 + b + b * b / c2)
        w_neg = c - b / c
        w_trig = 2.0 * rb * np.cos(np.arccos(np.clip(a / rb3, -1.0, 1.0)) / 3.0)
    w = np.where(pos, w_pos, np.where(disc >= 0, w_neg, w_trig))
    degenerate = (np.abs(c) < _C_EPS) & (disc >= 0)
    w = np.where(degenerate, 0.0, w)
    return w


def parabola_components(px, pt, alpha, offset):
    """Project points stored component-first.

    ``px`` has shape ``(d, ...)`` and ``pt``, ``alpha``, ``offset`` broadcast
    to ``px.shape[1:]``. Returns the projected ``(px, pt)``.
    """
    px = np.asarray(px, dtype=float)
    pt = np.asarray(pt, dtype=float)
    y = pt + offset
    n2 = np.sum(px * px, axis=0)
    feasible = y >= alpha * n2
    nrm = np.sqrt(n2)
    w = solve_cubic(2.0 * alpha * nrm, (2.0 / 3.0) * (1.0 - 2.0 * alpha * y))
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(nrm > 0, w / (2.0 * alpha * nrm), 0.0)
    qx = np.where(feasible, px, px * scale)
    qt = np.where(feasible, pt, alpha * np.sum(qx * qx, axis=0) - offset)
    return qx, qt


def project_parabola(p0, spec: ParabolaSpec) -> np.ndarray:
    """Nearest point of the shifted parabola epigraph.

    ``p0`` holds ``(p_x..., p_t)`` along its last axis; leading axes batch.

    Examples
    --------
    >>> project_parabola([0.0, -1.0], ParabolaSpec(1.0))
    array([0., 0.])
    """
    p0 = np.asarray(p0, dtype=float)
    comps = np.moveaxis(p0, -1, 0)
    qx, qt = parabola_components(comps[:-1], comps[-1], spec.alpha, spec.offset)
    return np.moveaxis(np.concatenate([qx, qt[None]], axis=0), 0, -1)


def project_ball(s, nu: float, axis: int = -1) -> np.ndarray:
    """Radial projection onto the Euclidean ball of radius ``nu``."""
    s = np.asarray(s, dtype=float)
    nrm = np.sqrt(np.sum(s * s, axis=axis, keepdims=True))
    with np.errstate(divide="ignore", invalid="ignore"):
        factor = np.where(nrm > nu, nu / nrm, 1.0)
    return s * factor
