"""Primal-dual solver for the lifted, convexified Mumford-Shah problem.

The saddle problem is posed on the normalized lattice (unit-cube coordinates,
responses in ``[0, 1]``). The dual field ``p`` lives in the convex set

* ``p_t >= |p_x|^2 / (4 f_X) - lam * f_X * (t_k - f)^2`` at every face, with
  ``t_k`` from :func:`level_faces`,
* ``|(1/S) * sum_{s1 <= k <= s2} p_x| <= nu`` for every level pair,

and the second family is decoupled with auxiliary variables ``s`` (raw partial
sums, radius ``S * nu``) and multipliers ``mu``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import _backend
from .calculus import pairing
from .errors import NonFiniteIterate, ShapeMismatch
from .grid import DENSITY_FLOOR, BinnedData, GridSpec
from .projections import project_C

log = logging.getLogger(__name__)

STEP_RULES = ("preconditioned", "uniform")


@dataclass(frozen=True)
class SolverConfig:
    """Hyperparameters and stopping rule.

    Parameters
    ----------
    lam : float
        Fidelity weight.
    nu : float
        Jump-length weight.
    tol : float
        Stop once :func:`residual` between iterates ``check_every`` apart
        falls below this.
    max_iter : int
        Hard iteration cap; hitting it flags the report as not converged.
    check_every : int
        Stride of the convergence test.
    step_rule : {"preconditioned", "uniform"}
        ``"preconditioned"`` uses diagonal step sizes matched to each row and
        column of the operator. ``"uniform"`` uses the uniform steps
        ``1/(4(d+1))`` on the operator rescaled to unit norm bound, with
        ``1/I`` for the multipliers; it is much slower to converge.
    backend : str or None
        ``"cython"``, ``"python"`` or None for the import-time default.
    """

    lam: float
    nu: float
    tol: float = 5e-5
    max_iter: int = 3000
    check_every: int = 10
    step_rule: str = "preconditioned"
    backend: str | None = None

    def __post_init__(self):
        if not (np.isfinite(self.lam) and self.lam >= 0):
            raise ValueError(f"lam must be finite and >= 0, got {self.lam}")
        if not (np.isfinite(self.nu) and self.nu >= 0):
            raise ValueError(f"nu must be finite and >= 0, got {self.nu}")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1 or self.check_every < 1:
            raise ValueError("max_iter and check_every must be >= 1")
        if self.step_rule not in STEP_RULES:
            raise ValueError(f"step_rule must be one of {STEP_RULES}")


@dataclass
class DualState:
    """Full iterate in the kernel layout.

    ``v``/``v_bar`` are ``(C, S)``, ``p`` is ``(d+1, C, S)`` and ``s``,
    ``mu``, ``mu_bar`` are ``(C, I, d)`` with ``C`` the number of spatial
    cells and ``I = S (S + 1) / 2`` level pairs. ``p`` is stored in the
    internal scaling of the step rule; ``p_scale`` converts it back.
    """

    v: np.ndarray
    v_bar: np.ndarray
    p: np.ndarray
    s: np.ndarray
    mu: np.ndarray
    mu_bar: np.ndarray
    p_scale: float = 1.0

    def copy(self) -> "DualState":
        return DualState(
            self.v.copy(), self.v_bar.copy(), self.p.copy(), self.s.copy(),
            self.mu.copy(), self.mu_bar.copy(), self.p_scale,
        )

    @classmethod
    def initial(cls, n_spatial: int, s_levels: int, d: int) -> "DualState":
        v = project_C(np.full((n_spatial, s_levels), 0.5))
        n_pairs = s_levels * (s_levels + 1) // 2
        z = np.zeros((n_spatial, n_pairs, d))
        return cls(v, v.copy(), np.zeros((d + 1, n_spatial, s_levels)), z, z.copy(), z.copy())

    def field(self, grid: GridSpec) -> tuple:
        """``(v, p)`` reshaped to the lattice, ``p`` in problem units."""
        v = self.v.reshape(grid.shape)
        p = (self.p * self.p_scale).reshape((grid.d + 1,) + grid.shape)
        return v, p


@dataclass
class SolveReport:
    v_star: np.ndarray
    iterations: int
    residual: float
    energy: float
    energy_normalized: float
    feasibility_gap: float
    nu_violation: float
    converged: bool
    state: DualState = field(repr=False)


@dataclass(frozen=True)
class _Problem:
    alpha: np.ndarray
    offset: np.ndarray
    scales: np.ndarray
    strides: np.ndarray
    dims: np.ndarray
    sigx: np.ndarray
    kappa: np.ndarray
    taumu: np.ndarray
    tau: float
    sigt: float
    sigs: float
    radius: float
    p_scale: float


def level_faces(s_levels: int) -> np.ndarray:
    """Unit-scale response at the interface above each level index.

    The interface between levels ``l`` and ``l + 1`` sits at ``(l + 1/2) / S``,
    the centre of the layer that layer-count decoding reports when the
    subgraph ends there, so fitting and decoding agree.
    """
    return (np.arange(s_levels) + 0.5) / s_levels


def _unit_data(binned: BinnedData, grid: GridSpec):
    if binned.f_hat.shape != grid.n_cells or binned.fx_hat.shape != grid.n_cells:
        raise ShapeMismatch(
            f"binned data shape {binned.f_hat.shape} does not match grid cells {grid.n_cells}"
        )
    f = grid.to_unit_response(binned.f_hat).ravel()
    fx = np.maximum(binned.fx_hat.ravel() * grid.box_volume, DENSITY_FLOOR)
    return f, fx


def _setup(binned: BinnedData, grid: GridSpec, cfg: SolverConfig) -> _Problem:
    f, fx = _unit_data(binned, grid)
    S, d = grid.s_levels, grid.d
    dims = np.array(grid.n_cells, dtype=np.int64)
    strides = np.array(
        [int(np.prod(grid.n_cells[j + 1:])) for j in range(d)], dtype=np.int64
    )
    alpha = 1.0 / (4.0 * fx)
    offset = cfg.lam * fx[:, None] * (level_faces(S)[None, :] - f[:, None]) ** 2
    s1, s2 = np.triu_indices(S)
    n_pairs = len(s1)
    if cfg.step_rule == "preconditioned":
        lv = np.arange(1, S + 1)
        # row sums of |K|: two difference taps plus the pairs containing the level
        sigx = 1.0 / (2.0 * dims.max() + lv * (S - lv + 1))
        sigt = 1.0 / (2.0 * S)
        return _Problem(
            alpha=alpha,
            offset=np.ascontiguousarray(offset),
            scales=np.array(list(grid.n_cells) + [S], dtype=float),
            strides=strides,
            dims=dims,
            sigx=sigx,
            kappa=np.sqrt(sigx / sigt),
            taumu=1.0 / (s2 - s1 + 2.0),
            tau=1.0 / (2.0 * dims.sum() + 2.0 * S),
            sigt=sigt,
            sigs=1.0,
            radius=S * cfg.nu,
            p_scale=1.0,
        )
    M = float(max(dims.max(), S))
    step = 1.0 / (4.0 * (d + 1))
    return _Problem(
        alpha=alpha / M,
        offset=np.ascontiguousarray(M * offset),
        scales=np.array(list(grid.n_cells) + [S], dtype=float) / M,
        strides=strides,
        dims=dims,
        sigx=np.full(S, step),
        kappa=np.ones(S),
        taumu=np.full(n_pairs, 1.0 / n_pairs),
        tau=step,
        sigt=step,
        sigs=1.0,
        radius=M * S * cfg.nu,
        p_scale=1.0 / M,
    )


def residual(v_prev, v_curr, p_prev, p_curr) -> float:
    """Largest relative sup-norm change of ``v`` and ``p``."""
    rv = np.max(np.abs(v_curr - v_prev)) / max(np.max(np.abs(v_curr)), 1e-12)
    rp = np.max(np.abs(p_curr - p_prev)) / max(np.max(np.abs(p_curr)), 1e-12)
    return float(max(rv, rp))


def constraint_gaps(state: DualState, binned: BinnedData, grid: GridSpec, cfg: SolverConfig):
    """Violations of the enforced constraints and of the coupled nu-constraint.

    Returns ``(parabola, ball, box, nu)``: the parabola gap on ``p``, the
    ball gap on ``s`` (in units of ``nu``), the distance of ``v`` from the
    box-with-boundary set, and ``max |(1/S) sum p_x| - nu`` over level pairs.
    """
    f, fx = _unit_data(binned, grid)
    S, d = grid.s_levels, grid.d
    p = state.p * state.p_scale
    px = p[:d, :, :-1]
    off = cfg.lam * fx[:, None] * (level_faces(S)[None, :-1] - f[:, None]) ** 2
    parab = np.max(np.sum(px * px, axis=0) / (4.0 * fx[:, None]) - off - p[d, :, :-1], initial=0.0)
    parab = max(parab, np.max(np.abs(p[:, :, -1]), initial=0.0))
    p_scale_s = state.p_scale / S
    ball = np.max(np.sqrt(np.sum(state.s ** 2, axis=2)) * p_scale_s - cfg.nu, initial=0.0)
    v = state.v
    box = max(
        np.max(np.abs(v - np.clip(v, 0.0, 1.0)), initial=0.0),
        np.max(np.abs(v[:, 0] - 1.0), initial=0.0),
        np.max(np.abs(v[:, -1]), initial=0.0),
    )
    s1, s2 = np.triu_indices(S)
    pref = np.zeros((p.shape[1], S + 1, d))
    pref[:, 1:] = np.cumsum(np.moveaxis(p[:d], 0, -1), axis=1)
    sums = (pref[:, s2 + 1] - pref[:, s1]) / S
    nu_gap = np.max(np.sqrt(np.sum(sums ** 2, axis=2)) - cfg.nu, initial=0.0)
    return float(max(parab, 0.0)), float(max(ball, 0.0)), float(box), float(max(nu_gap, 0.0))


def solve(
    binned: BinnedData,
    grid: GridSpec,
    cfg: SolverConfig,
    init: DualState | None = None,
    callback: Callable[[int, DualState], None] | None = None,
) -> SolveReport:
    """Run the primal-dual iteration to convergence or ``cfg.max_iter``.

    Parameters
    ----------
    binned, grid
        Per-cell data and the lattice it lives on.
    cfg
        Hyperparameters and stopping rule.
    init
        Optional warm start (copied, never modified).
    callback
        Called as ``callback(iteration, state)`` after every convergence
        check; with ``check_every=1`` that is after every iteration.

    Raises
    ------
    NonFiniteIterate
        If the iterate stops being finite.
    """
    prob = _setup(binned, grid, cfg)
    kernel = _backend.get(cfg.backend)
    C, S, d = grid.n_spatial, grid.s_levels, grid.d
    if init is None:
        state = DualState.initial(C, S, d)
    else:
        if init.v.shape != (C, S) or init.s.shape[2] != d:
            raise ShapeMismatch("warm start does not match the grid")
        state = init.copy()
        # rescale a dual stored under another step rule
        state.p *= state.p_scale / prob.p_scale
    state.p_scale = prob.p_scale

    it = 0
    res = np.inf
    converged = False
    v_prev, p_prev = state.v.copy(), state.p.copy()
    while it < cfg.max_iter:
        n = min(cfg.check_every, cfg.max_iter - it)
        kernel.pd_steps(
            state.v, state.v_bar, state.p, state.s, state.mu, state.mu_bar,
            prob.alpha, prob.offset, prob.sigx, prob.kappa, prob.taumu,
            prob.scales, prob.strides, prob.dims,
            prob.tau, prob.sigt, prob.sigs, prob.radius, n,
        )
        it += n
        if not (np.isfinite(state.p).all() and np.isfinite(state.v).all()
                and np.isfinite(state.mu).all()):
            raise NonFiniteIterate(f"non-finite iterate after {it} iterations")
        res = residual(v_prev, state.v, p_prev, state.p)
        if callback is not None:
            callback(it, state)
        if res < cfg.tol:
            converged = True
            break
        v_prev[...] = state.v
        p_prev[...] = state.p

    if not converged:
        log.warning("solver hit max_iter=%d with residual %.3g", cfg.max_iter, res)
    v_star, p_field = state.field(grid)
    energy = pairing(p_field, v_star, grid)
    parab, ball, box, nu_gap = constraint_gaps(state, binned, grid, cfg)
    return SolveReport(
        v_star=v_star.copy(),
        iterations=it,
        residual=res,
        energy=energy,
        energy_normalized=energy / v_star.size,
        feasibility_gap=max(parab, ball, box),
        nu_violation=nu_gap,
        converged=converged,
        state=state,
    )
