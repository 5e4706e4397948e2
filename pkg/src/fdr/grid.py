"""Regular lattice over X x R and binning of scattered observations.

Coordinates are mapped affinely to the unit cube and responses to [0, 1]
along the lifted axis; the solver only ever sees those normalized values.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import EmptyCloud, GridMismatch, NonFiniteInput

DENSITY_FLOOR = 1e-6


@dataclass(frozen=True)
class PointCloud:
    """Observations ``(X_i, Y_i)``; ``x`` has shape ``(n, d)``, ``y`` shape ``(n,)``."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float).ravel()
        if x.ndim == 1:
            x = x[:, None]
        if x.ndim != 2 or x.shape[1] < 1:
            raise GridMismatch(f"x must have shape (n, d), got {x.shape}")
        if x.shape[0] != y.shape[0]:
            raise GridMismatch(f"{x.shape[0]} coordinates but {y.shape[0]} responses")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise NonFiniteInput("point cloud contains non-finite values")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]

    def subset(self, idx) -> "PointCloud":
        return PointCloud(self.x[idx], self.y[idx])


@dataclass(frozen=True)
class GridSpec:
    d: int
    n_cells: tuple
    s_levels: int
    domain_box: tuple
    value_range: tuple

    def __post_init__(self):
        n_cells = tuple(int(k) for k in self.n_cells)
        if len(n_cells) != self.d:
            raise GridMismatch(f"need {self.d} cell counts, got {len(n_cells)}")
        if min(n_cells) < 2 or self.s_levels < 2:
            raise GridMismatch("every cell count and s_levels must be >= 2")
        box = tuple((float(lo), float(hi)) for lo, hi in self.domain_box)
        if len(box) != self.d or any(hi <= lo for lo, hi in box):
            raise GridMismatch(f"invalid domain box {box}")
        t_lo, t_hi = (float(v) for v in self.value_range)
        if not t_hi > t_lo:
            raise GridMismatch(f"invalid value range {(t_lo, t_hi)}")
        object.__setattr__(self, "n_cells", n_cells)
        object.__setattr__(self, "s_levels", int(self.s_levels))
        object.__setattr__(self, "domain_box", box)
        object.__setattr__(self, "value_range", (t_lo, t_hi))

    @property
    def shape(self) -> tuple:
        """Shape of the lifted lattice, ``n_cells + (s_levels,)``."""
        return self.n_cells + (self.s_levels,)

    @property
    def n_spatial(self) -> int:
        return int(np.prod(self.n_cells))

    @property
    def lo(self) -> np.ndarray:
        return np.array([b[0] for b in self.domain_box])

    @property
    def hi(self) -> np.ndarray:
        return np.array([b[1] for b in self.domain_box])

    @property
    def cell_widths(self) -> np.ndarray:
        return (self.hi - self.lo) / np.array(self.n_cells)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.cell_widths))

    @property
    def box_volume(self) -> float:
        return float(np.prod(self.hi - self.lo))

    @property
    def value_span(self) -> float:
        return self.value_range[1] - self.value_range[0]

    def axis_centers(self, j: int) -> np.ndarray:
        lo, hi = self.domain_box[j]
        n = self.n_cells[j]
        return lo + (np.arange(n) + 0.5) * (hi - lo) / n

    def cell_centers(self) -> np.ndarray:
        """Centers of all spatial cells in C order, shape ``(n_spatial, d)``."""
        axes = np.meshgrid(*[self.axis_centers(j) for j in range(self.d)], indexing="ij")
        return np.stack([a.ravel() for a in axes], axis=1)

    def cell_index(self, x: np.ndarray) -> np.ndarray:
        """Per-axis cell indices for points ``x`` of shape ``(n, d)``."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.d:
            raise GridMismatch(f"points have dimension {x.shape[1]}, grid has {self.d}")
        rel = (x - self.lo) / (self.hi - self.lo)
        tol = 1e-9
        if np.any(rel < -tol) or np.any(rel > 1 + tol):
            raise GridMismatch("points fall outside the grid's domain box")
        idx = np.floor(rel * np.array(self.n_cells)).astype(np.int64)
        return np.clip(idx, 0, np.array(self.n_cells) - 1)

    def flat_index(self, x: np.ndarray) -> np.ndarray:
        return np.ravel_multi_index(tuple(self.cell_index(x).T), self.n_cells)

    def to_unit_response(self, y):
        return (np.asarray(y, dtype=float) - self.value_range[0]) / self.value_span

    def from_unit_response(self, z):
        return self.value_range[0] + self.value_span * np.asarray(z, dtype=float)

    def with_value_range(self, value_range) -> "GridSpec":
        return GridSpec(self.d, self.n_cells, self.s_levels, self.domain_box, tuple(value_range))


@dataclass
class BinnedData:
    """Per-cell response and density estimates on the spatial part of a grid."""

    f_hat: np.ndarray
    fx_hat: np.ndarray
    count: np.ndarray
    empty_mask: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.empty_mask is None:
            self.empty_mask = self.count == 0


def _expand(lo: float, hi: float, padding: float) -> tuple:
    width = hi - lo
    if width <= 0:
        width = 1.0
    return lo - padding * width, hi + padding * width


def _broadcast_counts(n_cells, d: int) -> tuple:
    if np.isscalar(n_cells):
        return (int(n_cells),) * d
    n_cells = tuple(int(k) for k in n_cells)
    if len(n_cells) == 1 and d > 1:
        return n_cells * d
    return n_cells


def make_grid(
    cloud: PointCloud,
    n_cells,
    s_levels: int = 32,
    padding: float = 0.05,
    domain_box=None,
    value_range=None,
) -> GridSpec:
    """Lattice covering ``cloud``.

    The domain box is the tight bounding box of the coordinates widened by
    ``padding`` times the axis width on each side (a degenerate axis is
    widened by ``padding`` in absolute units). The value range is built the
    same way from the responses. Either can be overridden explicitly.
    """
    if cloud.n == 0:
        raise EmptyCloud("cannot build a grid for an empty cloud")
    counts = _broadcast_counts(n_cells, cloud.d)
    if domain_box is None:
        domain_box = tuple(
            _expand(cloud.x[:, j].min(), cloud.x[:, j].max(), padding) for j in range(cloud.d)
        )
    if value_range is None:
        value_range = _expand(cloud.y.min(), cloud.y.max(), padding)
    return GridSpec(cloud.d, counts, s_levels, tuple(domain_box), tuple(value_range))


def fill_empty(values: np.ndarray, empty_mask: np.ndarray) -> np.ndarray:
    """Fill empty cells with the mean of their filled face neighbours.

    Sweeps are Jacobi-style: a sweep only reads values that were filled
    before it started, so the result does not depend on traversal order.
    """
    out = np.array(values, dtype=float)
    missing = np.array(empty_mask, dtype=bool)
    if missing.all():
        raise EmptyCloud("no nonempty cell to fill from")
    while missing.any():
        total = np.zeros_like(out)
        hits = np.zeros(out.shape, dtype=np.int64)
        known = ~missing
        for axis in range(out.ndim):
            for shift in (1, -1):
                val = np.roll(np.where(known, out, 0.0), shift, axis=axis)
                ok = np.roll(known, shift, axis=axis)
                edge = [slice(None)] * out.ndim
                edge[axis] = 0 if shift == 1 else -1
                ok[tuple(edge)] = False
                total += np.where(ok, val, 0.0)
                hits += ok
        newly = missing & (hits > 0)
        out[newly] = total[newly] / hits[newly]
        missing &= ~newly
    return out


def estimate_density(cloud: PointCloud, grid: GridSpec, mode: str = "histogram") -> np.ndarray:
    """Per-cell density of X in original coordinate units."""
    if cloud.n == 0:
        raise EmptyCloud("cannot estimate a density from an empty cloud")
    if mode == "uniform":
        return np.full(grid.n_cells, 1.0 / grid.box_volume)
    if mode != "histogram":
        raise ValueError(f"unknown density mode {mode!r}")
    flat = grid.flat_index(cloud.x)
    count = np.bincount(flat, minlength=grid.n_spatial).reshape(grid.n_cells)
    return count / (cloud.n * grid.cell_volume)


def bin_points(
    cloud: PointCloud,
    grid: GridSpec,
    weight_mode: str = "uniform",
    winsor_q: float | None = None,
    density: str = "histogram",
) -> BinnedData:
    """Average responses per cell and estimate the design density.

    With ``winsor_q`` set, responses above that sample quantile are clipped
    to it before averaging. Empty cells are filled by :func:`fill_empty` and
    flagged in ``empty_mask``.
    """
    if cloud.d != grid.d:
        raise GridMismatch(f"cloud has d={cloud.d}, grid has d={grid.d}")
    if weight_mode != "uniform":
        raise ValueError(f"unsupported weight mode {weight_mode!r}")
    y = cloud.y
    if winsor_q is not None:
        if not 0 < winsor_q <= 1:
            raise ValueError("winsor_q must lie in (0, 1]")
        y = np.minimum(y, np.quantile(y, winsor_q))
    flat = grid.flat_index(cloud.x)
    count = np.bincount(flat, minlength=grid.n_spatial)
    sums = np.bincount(flat, weights=y, minlength=grid.n_spatial)
    empty = count == 0
    mean = np.where(empty, 0.0, sums / np.maximum(count, 1))
    shape = grid.n_cells
    f_hat = fill_empty(mean.reshape(shape), empty.reshape(shape))
    fx = estimate_density(cloud, grid, density)
    return BinnedData(f_hat, fx, count.reshape(shape), empty.reshape(shape))


def fit_value_range(grid: GridSpec, binned: BinnedData, padding: float = 0.05) -> GridSpec:
    """Grid whose value range is set from the binned responses instead of raw Y."""
    lo, hi = _expand(float(binned.f_hat.min()), float(binned.f_hat.max()), padding)
    return grid.with_value_range((lo, hi))


def read_csv(path) -> PointCloud:
    """Read a ``x1,...,xd,y`` CSV file into a :class:`PointCloud`."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise EmptyCloud(f"{path} is empty") from None
        d = len(header) - 1
        expected = [f"x{j + 1}" for j in range(d)] + ["y"]
        if d < 1 or header != expected:
            raise GridMismatch(f"expected header {','.join(expected)!r}, got {','.join(header)!r}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != d + 1:
                raise GridMismatch(f"{path}:{lineno}: expected {d + 1} fields")
            vals = [float(v) for v in row]
            if not all(np.isfinite(vals)):
                raise NonFiniteInput(f"{path}:{lineno}: non-finite value")
            rows.append(vals)
    if not rows:
        raise EmptyCloud(f"{path} has no data rows")
    arr = np.array(rows)
    return PointCloud(arr[:, :d], arr[:, d])


def write_csv(cloud: PointCloud, path) -> None:
    header = [f"x{j + 1}" for j in range(cloud.d)] + ["y"]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for xi, yi in zip(cloud.x, cloud.y):
            w.writerow([repr(float(v)) for v in xi] + [repr(float(yi))])
