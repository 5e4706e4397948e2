"""Forward-difference gradient on the lifted lattice and its adjoint.

Differences along axis ``j`` are scaled by the number of cells on that axis
(``N_j`` on spatial axes, ``S`` on the lifted one) and vanish at the last
index (Neumann boundary). The adjoint is the matching negative backward
divergence.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import ShapeMismatch
from .grid import GridSpec


def axis_scales(grid_or_scales, shape=None) -> np.ndarray:
    """Per-axis difference scales.

    ``grid_or_scales`` is either a :class:`GridSpec` (scales are its cell
    counts plus ``s_levels``) or an explicit sequence of scales.
    """
    if isinstance(grid_or_scales, GridSpec):
        scales = np.array(grid_or_scales.shape, dtype=float)
        if shape is not None and tuple(shape) != grid_or_scales.shape:
            raise ShapeMismatch(f"field shape {tuple(shape)} != grid shape {grid_or_scales.shape}")
        return scales
    scales = np.asarray(grid_or_scales, dtype=float).ravel()
    if shape is not None and len(scales) != len(shape):
        raise ShapeMismatch(f"{len(scales)} scales for a {len(shape)}-axis field")
    return scales


def _slices(ndim: int, axis: int):
    lo = [slice(None)] * ndim
    hi = [slice(None)] * ndim
    lo[axis] = slice(None, -1)
    hi[axis] = slice(1, None)
    return tuple(lo), tuple(hi)


def grad_forward(v: np.ndarray, grid_or_scales) -> np.ndarray:
    """Scaled forward differences, shape ``(v.ndim,) + v.shape``.

    Examples
    --------
    >>> grad_forward(np.array([1, 2/3, 1/3, 0]), [4.0])[0]
    array([-1.33333333, -1.33333333, -1.33333333,  0.        ])
    """
    v = np.asarray(v, dtype=float)
    scales = axis_scales(grid_or_scales, v.shape)
    out = np.zeros((v.ndim,) + v.shape)
    for j in range(v.ndim):
        lo, hi = _slices(v.ndim, j)
        out[j][lo] = scales[j] * (v[hi] - v[lo])
    return out


def divergence_adjoint(p: np.ndarray, grid_or_scales) -> np.ndarray:
    """Adjoint of :func:`grad_forward`: ``<grad_forward(v), p> == <v, divergence_adjoint(p)>``."""
    p = np.asarray(p, dtype=float)
    ndim = p.ndim - 1
    if p.shape[0] != ndim:
        raise ShapeMismatch(f"dual field needs {ndim} components, has {p.shape[0]}")
    scales = axis_scales(grid_or_scales, p.shape[1:])
    out = np.zeros(p.shape[1:])
    for j in range(ndim):
        lo, hi = _slices(ndim, j)
        pj = scales[j] * p[j][lo]
        out[lo] -= pj
        out[hi] += pj
    return out


def pairing(p: np.ndarray, v: np.ndarray, grid_or_scales, normalized: bool = False) -> float:
    """``<p, D v>``; with ``normalized`` the sum is divided by the lattice size."""
    p = np.asarray(p, dtype=float)
    v = np.asarray(v, dtype=float)
    if p.shape != (v.ndim,) + v.shape:
        raise ShapeMismatch(f"dual shape {p.shape} does not match primal shape {v.shape}")
    total = float(np.sum(p * grad_forward(v, grid_or_scales)))
    if normalized:
        total /= v.size
    return total


def operator_norm_sq(
    shape: Sequence[int], grid_or_scales, n_iter: int = 200, seed: int = 0
) -> float:
    """Power-iteration estimate of ``||D||^2`` (the top eigenvalue of ``D^T D``)."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(tuple(shape))
    x /= np.linalg.norm(x)
    lam = 0.0
    for _ in range(n_iter):
        y = divergence_adjoint(grad_forward(x, grid_or_scales), grid_or_scales)
        lam = float(np.linalg.norm(y))
        if lam == 0.0:
            return 0.0
        x = y / lam
    return lam
