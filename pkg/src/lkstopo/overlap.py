"""Transfer between the moving design grid and the fixed analysis grid.

Every moved design point spreads onto (and samples from) the ``4**d``
analysis nodes inside its kernel support.  ``scatter`` and ``gather`` use the
same stencil, so they are exact transposes of each other.

Parallel write discipline: ``gather`` writes only to its own design point;
``scatter`` accumulates into analysis nodes through a single ordered
``bincount`` so results are deterministic.
"""

from __future__ import annotations

import functools
import math
import warnings

import numpy as np

from .lattice import UniformGrid
from . import kernels
from .motion import MotionSpec, body_position

SUPPORT = 2.0  # half-width in units of dx


def kernel_w(r, dx: float = 1.0, variant: str = "standard"):
    """1D smoothing kernel; zero for ``|r| > 2 dx``.

    ``variant="printed"`` evaluates ``(1 - cos(pi r / 2)) / (4 dx)`` literally,
    for replication studies only: it vanishes at ``r = 0``.
    """
    r = np.asarray(r, dtype=float)
    inside = np.abs(r) <= SUPPORT * dx
    if variant == "standard":
        val = (1.0 + np.cos(np.pi * r / (2.0 * dx))) / (4.0 * dx)
    elif variant == "printed":
        val = (1.0 - np.cos(np.pi * r / 2.0)) / (4.0 * dx)
    else:
        raise ValueError(f"unknown kernel variant {variant!r}")
    return np.where(inside, val, 0.0)


class OverlapStencil:
    """Kernel weights ``W(x, x_ref) dx^d`` linking points to analysis nodes."""

    def __init__(self, points: np.ndarray, grid: UniformGrid, variant: str = "standard"):
        points = np.asarray(points, dtype=float)
        n, d = points.shape
        if d != grid.d:
            raise ValueError("point and grid dimensions differ")
        self.grid = grid
        self.n_points = n
        if variant not in ("standard", "printed"):
            raise ValueError(f"unknown kernel variant {variant!r}")
        if kernels.use_compiled():
            self.index, self.weight, self.clipped = kernels.build_stencil(points, grid.origin, grid.dx, grid.shape, variant)
        else:
            self.index, self.weight, self.clipped = self._build(points, grid, variant)
        if self.clipped:
            warnings.warn("design points left the kernel-safe interior; contributions clipped", RuntimeWarning, stacklevel=3)

    @staticmethod
    def _build(points, grid, variant):
        n, d = points.shape
        per_axis_idx, per_axis_w = [], []
        for a in range(d):
            s = (points[:, a] - grid.origin[a]) / grid.dx
            base = np.floor(s).astype(np.int64) - 1
            idx = base[:, None] + np.arange(4)[None, :]
            w = kernel_w((idx - s[:, None]) * grid.dx, grid.dx, variant) * grid.dx
            per_axis_idx.append(idx)
            per_axis_w.append(w)
        # tensor product over axes -> (n, 4**d)
        idx_full = np.zeros((n, 1), dtype=np.int64)
        w_full = np.ones((n, 1))
        ok_full = np.ones((n, 1), dtype=bool)
        for a in range(d):
            ia, wa = per_axis_idx[a], per_axis_w[a]
            ok = (ia >= 0) & (ia < grid.shape[a])
            idx_full = (idx_full[:, :, None] * grid.shape[a] + np.clip(ia, 0, grid.shape[a] - 1)[:, None, :]).reshape(n, -1)
            w_full = (w_full[:, :, None] * wa[:, None, :]).reshape(n, -1)
            ok_full = (ok_full[:, :, None] & ok[:, None, :]).reshape(n, -1)
        lost = (~ok_full) & (w_full != 0.0)
        return idx_full, np.where(ok_full, w_full, 0.0), bool(lost.any())

    def scatter(self, values: np.ndarray) -> np.ndarray:
        """Spread point values (``(N,)`` or ``(N, m)``) onto the grid."""
        values = np.asarray(values, dtype=float)
        size = self.grid.size
        if kernels.use_compiled():
            out = kernels.scatter(self.index, self.weight, values.reshape(self.n_points, -1), size)
            if values.ndim == 1:
                return out[0].reshape(self.grid.shape)
            return out.reshape((values.shape[1],) + self.grid.shape)
        flat_idx = self.index.ravel()
        if values.ndim == 1:
            out = np.bincount(flat_idx, weights=(self.weight * values[:, None]).ravel(), minlength=size)
            return out.reshape(self.grid.shape)
        comps = [
            np.bincount(flat_idx, weights=(self.weight * values[:, k, None]).ravel(), minlength=size)
            for k in range(values.shape[1])
        ]
        return np.stack(comps).reshape((values.shape[1],) + self.grid.shape)

    def gather(self, field: np.ndarray) -> np.ndarray:
        """Sample a grid field (scalar or ``(m, ...)``) at the points."""
        field = np.asarray(field, dtype=float)
        if field.shape == self.grid.shape:
            return (field.ravel()[self.index] * self.weight).sum(axis=1)
        flat = field.reshape(field.shape[0], -1)
        return np.stack([(fk[self.index] * self.weight).sum(axis=1) for fk in flat], axis=1)


def design_points(design_grid: UniformGrid) -> np.ndarray:
    """Design-frame node coordinates as ``(N, d)`` (a read-only cached array)."""
    return _design_points(design_grid)


@functools.lru_cache(maxsize=16)
def _design_points(design_grid: UniformGrid) -> np.ndarray:
    pts = np.ascontiguousarray(design_grid.coordinates().reshape(design_grid.d, -1).T)
    pts.flags.writeable = False
    return pts


def stencil_at(t: float, spec: MotionSpec, design_grid: UniformGrid, grid: UniformGrid, variant: str = "standard") -> OverlapStencil:
    if not math.isclose(design_grid.dx, grid.dx):
        raise ValueError("design and analysis grids must share dx")
    return OverlapStencil(body_position(design_points(design_grid), t, spec), grid, variant)


def map_to_analysis(v_ref, t, spec, design_grid, grid, variant="standard"):
    """``v(x) = sum_xi W(x, x_ref(xi, t)) v_ref(xi) dx^d``."""
    st = stencil_at(t, spec, design_grid, grid, variant)
    v_ref = np.asarray(v_ref, dtype=float)
    if v_ref.shape == design_grid.shape:
        return st.scatter(v_ref.ravel())
    return st.scatter(v_ref.reshape(v_ref.shape[0], -1).T)


def map_to_design(v, t, spec, design_grid, grid, variant="standard"):
    """``v_ref(xi) = sum_x W(x, x_ref(xi, t)) v(x) dx^d``."""
    st = stencil_at(t, spec, design_grid, grid, variant)
    v = np.asarray(v, dtype=float)
    out = st.gather(v)
    if out.ndim == 1:
        return out.reshape(design_grid.shape)
    return out.T.reshape((out.shape[1],) + design_grid.shape)
