"""Lattice-gas models, uniform grids, moments and the LKS equilibrium.

Array layout used throughout the package: scalar fields have the grid shape
``(nx, ny[, nz])``, vector fields carry a leading component axis
``(d, nx, ny[, nz])`` and rank-2 tensors two of them, ``(d, d, ...)`` with
``grad[a, b] = du_a/dx_b``.
"""

from __future__ import annotations

import dataclasses
import itertools
import warnings
from fractions import Fraction

import numpy as np

LOW_MACH_LIMIT = 0.3


@dataclasses.dataclass(frozen=True)
class LatticeModel:
    """Discrete velocity set and weights of a DdQq lattice."""

    name: str
    c: np.ndarray  # (Q, d) integer lattice vectors
    w: np.ndarray  # (Q,)
    exact_w: tuple[Fraction, ...]

    @property
    def d(self) -> int:
        return self.c.shape[1]

    @property
    def Q(self) -> int:
        return self.c.shape[0]

    def opposite(self) -> np.ndarray:
        """Index of -c_i for every population."""
        lookup = {tuple(ci): i for i, ci in enumerate(self.c)}
        return np.array([lookup[tuple(-ci)] for ci in self.c])


def _make_model(name: str, vectors: list[tuple[int, ...]], weights: list[Fraction]) -> LatticeModel:
    c = np.array(vectors, dtype=np.int64)
    c.setflags(write=False)
    w = np.array([float(x) for x in weights])
    w.setflags(write=False)
    return LatticeModel(name=name, c=c, w=w, exact_w=tuple(weights))


def _d2q9() -> LatticeModel:
    vectors = [(0, 0), (1, 0), (0, 1), (-1, 0), (0, -1), (1, 1), (-1, 1), (-1, -1), (1, -1)]
    weights = [Fraction(4, 9)] + [Fraction(1, 9)] * 4 + [Fraction(1, 36)] * 4
    return _make_model("D2Q9", vectors, weights)


def _d3q15() -> LatticeModel:
    vectors = [(0, 0, 0), (1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)]
    vectors += list(itertools.product((1, -1), repeat=3))
    weights = [Fraction(2, 9)] + [Fraction(1, 9)] * 6 + [Fraction(1, 72)] * 8
    return _make_model("D3Q15", vectors, weights)


D2Q9 = _d2q9()
D3Q15 = _d3q15()


def model_for_dimension(d: int) -> LatticeModel:
    if d == 2:
        return D2Q9
    if d == 3:
        return D3Q15
    raise ValueError(f"no lattice model for dimension {d}")


@dataclasses.dataclass(frozen=True)
class UniformGrid:
    """Node-centred grid; node coordinates are ``origin + index * dx``."""

    shape: tuple[int, ...]
    dx: float = 1.0
    origin: tuple[float, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "shape", tuple(int(n) for n in self.shape))
        if any(n < 1 for n in self.shape):
            raise ValueError(f"grid extents must be positive, got {self.shape}")
        if self.dx <= 0:
            raise ValueError("dx must be positive")
        if self.origin is None:
            object.__setattr__(self, "origin", (0.0,) * len(self.shape))
        elif len(self.origin) != len(self.shape):
            raise ValueError("origin and shape differ in dimension")

    @property
    def d(self) -> int:
        return len(self.shape)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def axis_coordinates(self, axis: int) -> np.ndarray:
        return self.origin[axis] + self.dx * np.arange(self.shape[axis])

    def coordinates(self) -> np.ndarray:
        """Node coordinates as an array of shape ``(d, *shape)``."""
        axes = [self.axis_coordinates(a) for a in range(self.d)]
        return np.stack(np.meshgrid(*axes, indexing="ij"))


@dataclasses.dataclass
class FlowState:
    """Macroscopic LKS state: density and velocity on the analysis grid."""

    rho: np.ndarray
    u: np.ndarray

    @classmethod
    def at_rest(cls, shape: tuple[int, ...], rho0: float = 1.0) -> "FlowState":
        return cls(rho=np.full(shape, rho0), u=np.zeros((len(shape), *shape)))

    @property
    def pressure(self) -> np.ndarray:
        return self.rho / 3.0

    def copy(self) -> "FlowState":
        return FlowState(self.rho.copy(), self.u.copy())


def moments(f: np.ndarray, model: LatticeModel) -> tuple[np.ndarray, np.ndarray]:
    """Density and velocity moments of populations ``f`` of shape ``(Q, ...)``."""
    f = np.asarray(f, dtype=float)
    if f.shape[0] != model.Q:
        raise ValueError(f"expected {model.Q} populations, got {f.shape[0]}")
    rho = f.sum(axis=0)
    u = np.tensordot(model.c.T.astype(float), f, axes=(1, 0))
    return rho, u


def pressure(rho):
    return np.asarray(rho) / 3.0


def equilibrium(rho, u, grad_u, A: float, model: LatticeModel, dx: float = 1.0) -> np.ndarray:
    """All Q equilibrium populations, shape ``(Q, *rho.shape)``.

    ``f_i = w_i {rho + 3 c.u + 9/2 (c.u)^2 - 3/2 u^2 + dx A (du + du^T) : cc}``
    """
    rho = np.asarray(rho, dtype=float)
    u = np.asarray(u, dtype=float)
    c = model.c.astype(float)
    if np.max(np.abs(u), initial=0.0) > LOW_MACH_LIMIT:
        warnings.warn("velocity above low-Mach limit in equilibrium", RuntimeWarning, stacklevel=2)
    cu = np.tensordot(c, u, axes=(1, 0))  # (Q, ...)
    usq = (u * u).sum(axis=0)
    feq = rho + 3.0 * cu + 4.5 * cu * cu - 1.5 * usq
    if grad_u is not None and A != 0.0:
        grad_u = np.asarray(grad_u, dtype=float)
        strain = grad_u + np.swapaxes(grad_u, 0, 1)
        cc = np.einsum("ia,ib->iab", c, c)
        feq = feq + dx * A * np.einsum("iab,ab...->i...", cc, strain)
    w = model.w.reshape((-1,) + (1,) * rho.ndim)
    return w * feq


def viscosity_of_A(A: float, dx: float = 1.0) -> float:
    """Kinematic viscosity ``(1/6 - 2A/9) dx``; requires ``A < 3/4``."""
    nu = (1.0 / 6.0 - 2.0 * A / 9.0) * dx
    if nu <= 0.0:
        raise ValueError(f"A = {A} gives non-positive viscosity {nu}")
    return nu


def A_of_viscosity(nu: float, dx: float = 1.0) -> float:
    return (1.0 / 6.0 - nu / dx) * 4.5


class Gradient:
    """Finite-difference derivative operator and its exact transpose.

    Central second-order differences in the interior, first-order one-sided
    differences on non-periodic faces, wrap-around on periodic axes.
    """

    def __init__(self, shape: tuple[int, ...], dx: float = 1.0, periodic: tuple[bool, ...] | None = None):
        self.shape = tuple(shape)
        self.dx = float(dx)
        self.periodic = tuple(periodic) if periodic is not None else (False,) * len(self.shape)

    def derivative(self, f: np.ndarray, axis: int) -> np.ndarray:
        lead = f.ndim - len(self.shape)
        ax = lead + axis
        n = f.shape[ax]
        if self.periodic[axis]:
            return (np.roll(f, -1, axis=ax) - np.roll(f, 1, axis=ax)) / (2.0 * self.dx)
        out = np.zeros_like(f, dtype=float)
        if n < 2:
            return out
        g = np.moveaxis(f, ax, 0)
        o = np.moveaxis(out, ax, 0)
        o[1:-1] = (g[2:] - g[:-2]) / (2.0 * self.dx)
        o[0] = (g[1] - g[0]) / self.dx
        o[-1] = (g[-1] - g[-2]) / self.dx
        return out

    def derivative_T(self, g: np.ndarray, axis: int) -> np.ndarray:
        """Transpose of :meth:`derivative` along ``axis``."""
        lead = g.ndim - len(self.shape)
        ax = lead + axis
        n = g.shape[ax]
        if self.periodic[axis]:
            return (np.roll(g, 1, axis=ax) - np.roll(g, -1, axis=ax)) / (2.0 * self.dx)
        out = np.zeros_like(g, dtype=float)
        if n < 2:
            return out
        h = np.moveaxis(g, ax, 0) / self.dx
        o = np.moveaxis(out, ax, 0)
        o[2:] += 0.5 * h[1:-1]
        o[:-2] -= 0.5 * h[1:-1]
        o[1] += h[0]
        o[0] -= h[0]
        o[-1] += h[-1]
        o[-2] -= h[-1]
        return out

    def __call__(self, u: np.ndarray) -> np.ndarray:
        """Gradient of a vector field ``(d, ...)`` -> ``(d, d, ...)``."""
        return np.stack([self.derivative(u, b) for b in range(len(self.shape))], axis=1)

    def transpose(self, g: np.ndarray) -> np.ndarray:
        """Adjoint of :meth:`__call__`: ``(d, d, ...)`` -> ``(d, ...)``."""
        out = np.zeros(g.shape[:1] + g.shape[2:])
        for b in range(len(self.shape)):
            out += self.derivative_T(g[:, b], b)
        return out


def velocity_gradient(u: np.ndarray, dx: float = 1.0, periodic: tuple[bool, ...] | None = None) -> np.ndarray:
    """Velocity gradient tensor field ``grad[a, b] = du_a/dx_b``."""
    return Gradient(u.shape[1:], dx, periodic)(u)
