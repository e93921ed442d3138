"""Pseudo-density on the design grid: filtering, projection, Brinkman law."""

from __future__ import annotations

import dataclasses
import itertools
import math

import numpy as np
import scipy.sparse as sp

from .lattice import UniformGrid

GAMMA_SLACK = 1e-12


@dataclasses.dataclass(frozen=True)
class BrinkmanParams:
    kappa_max: float = 1000.0
    q: float = 0.1

    def __post_init__(self):
        if self.kappa_max < 0:
            raise ValueError("kappa_max must be non-negative")
        if self.q <= 0:
            raise ValueError("q must be positive")


def _check_gamma(gamma):
    gamma = np.asarray(gamma, dtype=float)
    if gamma.size and (gamma.min() < -GAMMA_SLACK or gamma.max() > 1.0 + GAMMA_SLACK):
        raise ValueError("pseudo-density outside [0, 1]")
    return gamma


def brinkman(gamma, params: BrinkmanParams):
    """kappa_ref = kappa_max q gamma / ((1 - gamma) + q)."""
    gamma = _check_gamma(gamma)
    return params.kappa_max * params.q * gamma / ((1.0 - gamma) + params.q)


def brinkman_derivative(gamma, params: BrinkmanParams):
    gamma = _check_gamma(gamma)
    return params.kappa_max * params.q * (1.0 + params.q) / ((1.0 - gamma) + params.q) ** 2


def filter_matrix(grid: UniformGrid, radius: float) -> sp.csr_matrix:
    """Row-normalised conic density filter restricted to the design grid."""
    shape = grid.shape
    reach = int(math.floor(radius / grid.dx))
    offsets, weights = [], []
    for off in itertools.product(range(-reach, reach + 1), repeat=grid.d):
        w = radius - grid.dx * math.sqrt(sum(o * o for o in off))
        if w > 0:
            offsets.append(off)
            weights.append(w)
    idx = np.indices(shape).reshape(grid.d, -1)
    flat = np.arange(grid.size)
    rows, cols, vals = [], [], []
    for off, w in zip(offsets, weights):
        nb = idx + np.asarray(off)[:, None]
        ok = np.all((nb >= 0) & (nb < np.asarray(shape)[:, None]), axis=0)
        rows.append(flat[ok])
        cols.append(np.ravel_multi_index(tuple(nb[:, ok]), shape))
        vals.append(np.full(ok.sum(), w))
    m = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(grid.size, grid.size)
    )
    norm = np.asarray(m.sum(axis=1)).ravel()
    return sp.diags(1.0 / norm) @ m


def density_filter(gamma_raw: np.ndarray, grid: UniformGrid, radius: float) -> np.ndarray:
    return (filter_matrix(grid, radius) @ np.ravel(gamma_raw)).reshape(grid.shape)


def heaviside_project(gamma_bar, beta: float, eta: float = 0.5):
    gamma_bar = np.asarray(gamma_bar, dtype=float)
    num = math.tanh(beta * eta) + np.tanh(beta * (gamma_bar - eta))
    den = math.tanh(beta * eta) + math.tanh(beta * (1.0 - eta))
    return num / den


def heaviside_derivative(gamma_bar, beta: float, eta: float = 0.5):
    gamma_bar = np.asarray(gamma_bar, dtype=float)
    den = math.tanh(beta * eta) + math.tanh(beta * (1.0 - eta))
    return beta * (1.0 - np.tanh(beta * (gamma_bar - eta)) ** 2) / den


class DesignField:
    """Raw design variables and their filtered and projected images.

    ``physical`` (the projected field) is what the solver sees.  Setting
    ``raw`` or ``beta`` refreshes the derived fields immediately.
    """

    def __init__(
        self,
        grid: UniformGrid,
        raw: np.ndarray | float = 0.5,
        radius: float = 2.4,
        beta: float = 1.0,
        eta: float = 0.5,
        project: bool = True,
    ):
        self.grid = grid
        self.radius = radius
        self.eta = eta
        self.project = project
        self._H = filter_matrix(grid, radius)
        self._beta = float(beta)
        self._raw = np.empty(grid.shape)
        self.raw = raw

    @property
    def raw(self) -> np.ndarray:
        return self._raw

    @raw.setter
    def raw(self, value):
        value = np.broadcast_to(np.asarray(value, dtype=float), self.grid.shape)
        self._raw = np.clip(value, 0.0, 1.0).copy()
        self._refresh()

    @property
    def beta(self) -> float:
        return self._beta

    @beta.setter
    def beta(self, value: float):
        if value < 1.0 and self.project:
            raise ValueError("projection steepness must be >= 1")
        self._beta = float(value)
        self._refresh()

    def _refresh(self):
        self.filtered = (self._H @ self._raw.ravel()).reshape(self.grid.shape)
        if self.project:
            self.physical = np.clip(heaviside_project(self.filtered, self._beta, self.eta), 0.0, 1.0)
        else:
            self.physical = self.filtered.copy()

    def chain_rule(self, sens: np.ndarray) -> np.ndarray:
        """Map d/d(physical) to d/d(raw)."""
        sens = np.asarray(sens, dtype=float)
        if self.project:
            sens = sens * heaviside_derivative(self.filtered, self._beta, self.eta)
        return (self._H.T @ sens.ravel()).reshape(self.grid.shape)
