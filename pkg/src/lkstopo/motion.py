"""Prescribed rigid-body motion of the design grid.

A :class:`MotionSpec` combines a rotation law about a pivot with a
translation law for the pivot.  Points are arrays of shape ``(N, d)``.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np


@dataclasses.dataclass(frozen=True)
class NoRotation:
    def angle(self, t: float) -> float:
        return 0.0

    def rate(self, t: float) -> float:
        return 0.0


@dataclasses.dataclass(frozen=True)
class ConstantRotation:
    """theta(t) = 2 pi t / period + phase (counterclockwise for period > 0)."""

    period: float
    phase: float = 0.0

    def __post_init__(self):
        if self.period == 0:
            raise ValueError("rotation period must be non-zero")

    def angle(self, t: float) -> float:
        return 2.0 * math.pi * t / self.period + self.phase

    def rate(self, t: float) -> float:
        return 2.0 * math.pi / self.period


@dataclasses.dataclass(frozen=True)
class FixedTranslation:
    """Pivot held at ``position``."""

    position: tuple[float, ...]

    def position_at(self, t: float) -> np.ndarray:
        return np.asarray(self.position, dtype=float)

    def velocity_at(self, t: float) -> np.ndarray:
        return np.zeros(len(self.position))


@dataclasses.dataclass(frozen=True)
class SinusoidalTranslation:
    """x_G(t) = center + amplitude * sin(2 pi t / period + phase)."""

    center: tuple[float, ...]
    amplitude: tuple[float, ...]
    period: float
    phase: float = 0.0

    def position_at(self, t: float) -> np.ndarray:
        s = math.sin(2.0 * math.pi * t / self.period + self.phase)
        return np.asarray(self.center, dtype=float) + np.asarray(self.amplitude, dtype=float) * s

    def velocity_at(self, t: float) -> np.ndarray:
        k = 2.0 * math.pi / self.period
        return np.asarray(self.amplitude, dtype=float) * k * math.cos(k * t + self.phase)


@dataclasses.dataclass(frozen=True)
class ConstantTranslation:
    """x_G(t) = start + velocity * t."""

    start: tuple[float, ...]
    velocity: tuple[float, ...]

    def position_at(self, t: float) -> np.ndarray:
        return np.asarray(self.start, dtype=float) + np.asarray(self.velocity, dtype=float) * t

    def velocity_at(self, t: float) -> np.ndarray:
        return np.asarray(self.velocity, dtype=float)


def rotation_matrix(theta: float, d: int = 2, axis: int = 2) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    r2 = np.array([[c, -s], [s, c]])
    if d == 2:
        return r2
    return _embed(r2, axis, 1.0)


def rotation_matrix_derivative(theta: float, d: int = 2, axis: int = 2) -> np.ndarray:
    """d R / d theta."""
    c, s = math.cos(theta), math.sin(theta)
    r2 = np.array([[-s, -c], [c, -s]])
    if d == 2:
        return r2
    return _embed(r2, axis, 0.0)


def _embed(block: np.ndarray, axis: int, diag: float) -> np.ndarray:
    # rotation in the plane of the two axes other than `axis`, right-handed
    plane = [(1, 2), (2, 0), (0, 1)][axis]
    m = np.zeros((3, 3))
    m[axis, axis] = diag
    for a, pa in enumerate(plane):
        for b, pb in enumerate(plane):
            m[pa, pb] = block[a, b]
    return m


@dataclasses.dataclass(frozen=True)
class MotionSpec:
    """Rigid transform ``x = R(theta(t)) (xi - pivot) + x_G(t)``."""

    pivot: tuple[float, ...]
    rotation: NoRotation | ConstantRotation = NoRotation()
    translation: FixedTranslation | SinusoidalTranslation | ConstantTranslation | None = None
    axis: int = 2

    def __post_init__(self):
        if self.translation is None:
            object.__setattr__(self, "translation", FixedTranslation(tuple(self.pivot)))
        if self.d not in (2, 3):
            raise ValueError("motion must be 2D or 3D")

    @property
    def d(self) -> int:
        return len(self.pivot)

    def matrix(self, t: float) -> np.ndarray:
        return rotation_matrix(self.rotation.angle(t), self.d, self.axis)

    def is_stationary(self) -> bool:
        return (
            isinstance(self.rotation, NoRotation)
            and isinstance(self.translation, FixedTranslation)
            and np.allclose(self.translation.position, self.pivot)
        )


def stationary(d: int) -> MotionSpec:
    return MotionSpec(pivot=(0.0,) * d)


def body_position(xi: np.ndarray, t: float, spec: MotionSpec) -> np.ndarray:
    """Analysis-frame position of design points ``xi`` (shape ``(N, d)``)."""
    xi = np.asarray(xi, dtype=float)
    rel = xi - np.asarray(spec.pivot, dtype=float)
    return rel @ spec.matrix(t).T + spec.translation.position_at(t)


def body_velocity(xi: np.ndarray, t: float, spec: MotionSpec) -> np.ndarray:
    """Analysis-frame velocity ``R'(theta) (xi - pivot) omega + u_G``."""
    xi = np.asarray(xi, dtype=float)
    rel = xi - np.asarray(spec.pivot, dtype=float)
    theta = spec.rotation.angle(t)
    dR = rotation_matrix_derivative(theta, spec.d, spec.axis)
    return spec.rotation.rate(t) * (rel @ dR.T) + spec.translation.velocity_at(t)
