"""Objective functionals, the volume constraint and adjoint source terms.

All space-time integrals are node sums (window endpoints included); the
``dx^d dt`` quadrature weights cancel in the averaged functionals.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .lattice import LatticeModel

PRESSURE = "pressure"  # J1: negative mean boundary pressure
FLOW = "flow"  # J2: negative mean directed velocity in a region


@dataclasses.dataclass
class ObjectiveSpec:
    kind: str
    region: np.ndarray  # bool mask on the analysis grid
    direction: tuple[float, ...] | None = None
    window: tuple[float, float] | None = None  # in time units; None = whole run

    def __post_init__(self):
        self.region = np.asarray(self.region, dtype=bool)
        if self.kind not in (PRESSURE, FLOW):
            raise ValueError(f"unknown objective kind {self.kind!r}")
        if not self.region.any():
            raise ValueError("objective region is empty")
        if self.kind == FLOW:
            if self.direction is None:
                raise ValueError("directed-flow objective needs a direction")
            n = np.asarray(self.direction, dtype=float)
            if not np.isclose(np.linalg.norm(n), 1.0, atol=1e-12):
                raise ValueError("objective direction must be a unit vector")


@dataclasses.dataclass
class ConstraintSpec:
    """Volume limit with an optional step-indexed continuation schedule."""

    v_max: float = 0.25
    schedule: tuple[tuple[int, float], ...] = ()

    def __post_init__(self):
        values = [self.v_max] + [v for _, v in self.schedule]
        if any(not 0.0 < v <= 1.0 for v in values):
            raise ValueError("volume fractions must lie in (0, 1]")
        steps = [s for s, _ in self.schedule]
        if steps != sorted(steps):
            raise ValueError("volume schedule steps must be increasing")
        if values != sorted(values, reverse=True):
            raise ValueError("volume schedule must be non-increasing")

    def at(self, step: int) -> float:
        """Volume limit in force at optimisation step ``step``."""
        v = self.v_max
        for s, value in self.schedule:
            if step >= s:
                v = value
        return v


def window_steps(window, n_steps: int, dt: float = 1.0) -> np.ndarray:
    """Indices of states ``0..n_steps`` whose time lies inside ``window``."""
    n = np.arange(n_steps + 1)
    if window is None:
        return n
    ta, tb = window
    if not ta < tb:
        raise ValueError("empty objective window")
    t = n * dt
    eps = 1e-9 * max(dt, 1.0)
    return n[(t >= ta - eps) & (t <= tb + eps)]


class Objective:
    """Time-windowed functional evaluated step by step during a forward run."""

    def __init__(self, spec: ObjectiveSpec, n_steps: int, dt: float = 1.0):
        self.spec = spec
        self.steps = window_steps(spec.window, n_steps, dt)
        self._in = np.zeros(n_steps + 1, dtype=bool)
        self._in[self.steps] = True
        self.n_region = int(spec.region.sum())
        self.norm = 1.0 / (self.n_region * max(len(self.steps), 1))
        self.direction = None if spec.direction is None else np.asarray(spec.direction, dtype=float)

    @property
    def kind(self) -> str:
        return self.spec.kind

    def in_window(self, n: int) -> bool:
        return 0 <= n < len(self._in) and bool(self._in[n])

    def sample(self, rho: np.ndarray, u: np.ndarray) -> float:
        """Spatial mean of the integrand (pressure, or n.u) at one instant."""
        if self.kind == PRESSURE:
            return float(rho[self.spec.region].mean() / 3.0)
        nu = np.tensordot(self.direction, u, axes=(0, 0))
        return float(nu[self.spec.region].mean())

    def contribution(self, n: int, rho: np.ndarray, u: np.ndarray) -> float:
        if not self.in_window(n) or len(self.steps) == 0:
            return 0.0
        return -self.sample(rho, u) / len(self.steps)

    def state_derivative(self, n: int, shape: tuple[int, ...]):
        """(dJ/drho, dJ/du) at step ``n``; ``None`` entries are identically zero."""
        if not self.in_window(n):
            return None, None
        if self.kind == PRESSURE:
            drho = np.where(self.spec.region, -self.norm / 3.0, 0.0)
            return drho, None
        mask = self.spec.region.astype(float)
        du = -self.norm * self.direction.reshape((-1,) + (1,) * len(shape)) * mask
        return None, du

    def adjoint_sources(self, n: int, model: LatticeModel, shape: tuple[int, ...]) -> np.ndarray:
        """Per-population dJ/df_i at step ``n``, shape ``(Q, *shape)``."""
        out = np.zeros((model.Q,) + tuple(shape))
        if not self.in_window(n):
            return out
        if self.kind == PRESSURE:
            out[:, self.spec.region] = -self.norm / 3.0
        else:
            cn = model.c.astype(float) @ self.direction
            out[:, self.spec.region] = (-self.norm * cn)[:, None]
        return out


def sources_to_moments(sources: np.ndarray, model: LatticeModel):
    """Split ``dJ/df_i = a + c_i.b`` into ``(a, b)`` via weighted moments."""
    w = model.w
    a = np.tensordot(w, sources, axes=(0, 0))
    b = 3.0 * np.tensordot((w[:, None] * model.c).T, sources, axes=(1, 0))
    return a, b


def eval_J1(rho_history: np.ndarray, boundary: np.ndarray) -> float:
    """Negative mean pressure on ``boundary`` over the supplied instants."""
    rho_history = np.asarray(rho_history, dtype=float)
    if rho_history.shape[0] == 0:
        raise ValueError("empty objective window")
    return -float(rho_history[:, np.asarray(boundary, dtype=bool)].mean() / 3.0)


def eval_J2(u_history: np.ndarray, region: np.ndarray, direction) -> float:
    """Negative mean of ``n.u`` over ``region`` and the supplied instants."""
    u_history = np.asarray(u_history, dtype=float)
    region = np.asarray(region, dtype=bool)
    if u_history.shape[0] == 0 or not region.any():
        raise ValueError("empty objective window or region")
    nu = np.tensordot(np.asarray(direction, dtype=float), u_history, axes=(0, 1))
    return -float(nu[:, region].mean())


def eval_G(gamma: np.ndarray, v_max: float) -> float:
    """Volume constraint ``mean(gamma) / v_max - 1``; feasible when <= 0."""
    return float(np.mean(gamma) / v_max - 1.0)


def volume_sensitivity(gamma: np.ndarray, v_max: float) -> np.ndarray:
    """dG/dgamma per design node."""
    gamma = np.asarray(gamma)
    return np.full(gamma.shape, 1.0 / (v_max * gamma.size))


def boundary_nodes(shape: tuple[int, ...], faces: tuple[str, ...] | None = None) -> np.ndarray:
    """Mask of nodes on the named grid faces (all faces by default)."""
    from .forward import FACE_NAMES, face_slice

    mask = np.zeros(shape, dtype=bool)
    for name in faces or FACE_NAMES[: 2 * len(shape)]:
        mask[face_slice(name, len(shape))] = True
    return mask
