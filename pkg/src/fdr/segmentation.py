"""Decode the lifted solution into a surface, a jump set and jump sizes."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GridMismatch
from .grid import GridSpec


@dataclass
class FdrEstimate:
    """Point estimate on the spatial cells of a grid.

    ``u_hat`` and ``jump_size`` are in response units; ``gradient_mag`` is
    on the normalized scale used for the ``sqrt(nu)`` threshold.
    """

    u_hat: np.ndarray
    jump_mask: np.ndarray
    jump_size: np.ndarray
    gradient_mag: np.ndarray


@dataclass
class Truth:
    """Noise-free reference on a grid: surface, true jump cells and signed sizes."""

    surface: np.ndarray
    jump_mask: np.ndarray
    jump_size: np.ndarray


@dataclass
class Metrics:
    mse_u: float
    mse_tau: float
    bias_tau: float
    alpha_hat: float
    fnr: float
    fpr: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def threshold_level_set(v_star: np.ndarray, grid: GridSpec, t: float = 0.5) -> np.ndarray:
    """Layer-count decoding: ``t_min + span * (#{v > t} - 1/2) / S``."""
    v_star = np.asarray(v_star)
    if v_star.shape != grid.shape:
        raise GridMismatch(f"field shape {v_star.shape} != grid shape {grid.shape}")
    layers = np.count_nonzero(v_star > t, axis=-1)
    return grid.from_unit_response((layers - 0.5) / grid.s_levels)


def forward_differences(u: np.ndarray) -> np.ndarray:
    """Unscaled forward differences along every axis, zero at the last index."""
    u = np.asarray(u, dtype=float)
    out = np.zeros((u.ndim,) + u.shape)
    for j in range(u.ndim):
        lo = [slice(None)] * u.ndim
        hi = [slice(None)] * u.ndim
        lo[j] = slice(None, -1)
        hi[j] = slice(1, None)
        out[j][tuple(lo)] = u[tuple(hi)] - u[tuple(lo)]
    return out


def max_axis_difference(diffs: np.ndarray) -> np.ndarray:
    """Signed forward difference of largest magnitude; ties go to the lower axis."""
    idx = np.argmax(np.abs(diffs), axis=0)
    return np.take_along_axis(diffs, idx[None], axis=0)[0]


def extract_jump_set(u_hat: np.ndarray, grid: GridSpec, nu: float):
    """Cells whose normalized gradient magnitude is at least ``sqrt(nu)``.

    Returns ``(jump_mask, jump_size, gradient_mag)``. The gradient is taken
    on the normalized response scale with plain neighbour differences, and
    ``jump_size`` is the signed largest forward difference in response units
    (zero off the mask).
    """
    u_hat = np.asarray(u_hat, dtype=float)
    if u_hat.shape != grid.n_cells:
        raise GridMismatch(f"surface shape {u_hat.shape} != grid cells {grid.n_cells}")
    diffs = forward_differences(u_hat)
    grad_mag = np.sqrt(np.sum(diffs ** 2, axis=0)) / grid.value_span
    mask = grad_mag >= np.sqrt(nu)
    size = np.where(mask, max_axis_difference(diffs), 0.0)
    return mask, size, grad_mag


def estimate_from_field(v_star: np.ndarray, grid: GridSpec, nu: float) -> FdrEstimate:
    u_hat = threshold_level_set(v_star, grid)
    mask, size, grad_mag = extract_jump_set(u_hat, grid, nu)
    return FdrEstimate(u_hat, mask, size, grad_mag)


def _rate(num: int, den: int) -> float:
    return num / den if den else 0.0


def compute_metrics(estimate: FdrEstimate, truth: Truth) -> Metrics:
    """Table-style error summary of an estimate against noise-free truth.

    Jump sizes are compared in magnitude on cells that are both detected and
    truly on the jump set; with no such cell the estimated size counts as 0.
    FNR and FPR are per-cell rates.
    """
    if estimate.u_hat.shape != truth.surface.shape:
        raise GridMismatch("estimate and truth live on different grids")
    mse_u = float(np.mean((estimate.u_hat - truth.surface) ** 2))
    true_jump = np.asarray(truth.jump_mask, dtype=bool)
    found = np.asarray(estimate.jump_mask, dtype=bool)
    hit = true_jump & found
    if hit.any():
        tau_hat = np.abs(estimate.jump_size[hit])
        tau = np.abs(truth.jump_size[hit])
    else:
        tau = np.abs(truth.jump_size[true_jump])
        tau_hat = np.zeros_like(tau)
    err = tau_hat - tau
    n_true = int(true_jump.sum())
    n_off = int(true_jump.size - n_true)
    return Metrics(
        mse_u=mse_u,
        mse_tau=float(np.mean(err ** 2)) if err.size else 0.0,
        bias_tau=float(np.mean(err)) if err.size else 0.0,
        alpha_hat=float(np.mean(tau_hat)) if tau_hat.size else 0.0,
        fnr=_rate(int((true_jump & ~found).sum()), n_true),
        fpr=_rate(int((found & ~true_jump).sum()), n_off),
    )
