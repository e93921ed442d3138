"""Adjoint LKS sweep and design sensitivities.

The backward sweep is the exact transpose of :func:`lkstopo.forward.run_forward`
expressed through the adjoint moments ``rho~, u~, s~``:

* adjoint streaming collects the weighted moments ``(1, c, cc)`` of the
  adjoint equilibria found downstream at ``x + c_i`` (the transpose of the
  clamped/wrapped upstream gather);
* the adjoint equilibrium is ``rho~ + 3 c.(u~ + 3 s~ u - rho~ u) - dx A c.div(s~ + s~^T)``
  where ``div`` is the negative transpose of the forward gradient stencil;
* penalisation and objective sources act on the coefficient of ``3 c`` in
  that equilibrium, which makes the implicit update closed-form:
  ``u~ = (coefficient - sources) / (1 + kappa)``.

The design sensitivity accumulates ``3 dkappa_ref/dgamma (u - u_S).u~`` pulled
back through the same kernel stencil that spread ``kappa`` in the forward run.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .design import brinkman, brinkman_derivative
from .forward import BoundaryMasks, FlowProblem, ForwardResult, LKSSolver
from .lattice import Gradient, LatticeModel
from .objectives import Objective


@dataclasses.dataclass
class AdjointState:
    """Adjoint moments on the analysis grid (flattened node axis)."""

    rho: np.ndarray  # (N,)
    u: np.ndarray  # (d, N)
    s: np.ndarray  # (d, d, N)


@dataclasses.dataclass
class AdjointResult:
    sensitivity: np.ndarray  # dJ/dgamma (physical density) on the design grid
    carry: np.ndarray  # adjoint populations entering step 0, for warm restarts
    state: AdjointState  # fields after the last (earliest) update


def adjoint_velocity_coefficient(rho_a, u_a, s_a, u, grad: Gradient, A: float):
    """``u~ + 3 s~ u - rho~ u - (dx A / 3) div(s~ + s~^T)`` on gridded arrays.

    ``rho_a`` has the grid shape, ``u_a``/``u`` ``(d, ...)``, ``s_a`` ``(d, d, ...)``.
    """
    v = u_a + 3.0 * np.einsum("ab...,b...->a...", s_a, u) - rho_a * u
    if A != 0.0:
        v = v + (grad.dx * A / 3.0) * grad.transpose(s_a + np.swapaxes(s_a, 0, 1))
    return v


def adjoint_equilibrium(rho_a, u_a, s_a, u, grad: Gradient, A: float, model: LatticeModel) -> np.ndarray:
    """All Q adjoint equilibria, shape ``(Q, ...)``."""
    v = adjoint_velocity_coefficient(rho_a, u_a, s_a, u, grad, A)
    c = model.c.astype(float)
    return rho_a + 3.0 * np.tensordot(c, v, axes=(1, 0))


def adjoint_stream(feq_adj: np.ndarray, solver: LKSSolver) -> AdjointState:
    """Weighted moments of adjoint equilibria gathered from downstream nodes.

    ``feq_adj`` has shape ``(Q, N)``; this is the transpose of
    :meth:`LKSSolver.stream`.
    """
    q, n = feq_adj.shape
    f = np.bincount(solver.src_flat, weights=feq_adj.ravel(), minlength=q * n).reshape(q, n)
    wf = solver.w[:, None] * f
    d = solver.grid.d
    rho = wf.sum(axis=0)
    u = solver.c.T @ wf
    s = (solver.cc.T @ wf).reshape(d, d, n)
    return AdjointState(rho, u, s)


def apply_adjoint_sources(
    star: AdjointState,
    u: np.ndarray,
    kappa_total: np.ndarray,
    solver: LKSSolver,
    src_rho: np.ndarray | None = None,
    src_u: np.ndarray | None = None,
    masks: BoundaryMasks | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Objective sources, penalisation and boundary values for one step.

    ``src_rho``/``src_u`` are ``dJ/drho`` and ``dJ/du`` (equivalently the
    weighted moments of ``dJ/df_i``).  Returns ``(rho~, u~)`` flattened.
    """
    shape = solver.grid.shape
    d, n = solver.grid.d, solver.grid.size
    v = adjoint_velocity_coefficient(
        star.rho.reshape(shape), star.u.reshape((d,) + shape), star.s.reshape((d, d) + shape), u, solver.grad, solver.A
    ).reshape(d, n)
    rho_a = star.rho.copy()
    if src_rho is not None:
        rho_a -= src_rho.ravel()
    if src_u is not None:
        v = v - src_u.reshape(d, n) / 3.0
    if masks is not None:
        rho_a[masks.rho_fixed.ravel()] = 0.0
        v = np.where(masks.u_fixed.reshape(d, n), 0.0, v)
    return rho_a, v / (1.0 + kappa_total.reshape(1, n))


def run_adjoint(
    problem: FlowProblem,
    gamma: np.ndarray,
    forward: ForwardResult,
    objective: Objective,
    terminal: np.ndarray | None = None,
    snapshot=None,
) -> AdjointResult:
    """Backward sweep over the recorded forward history.

    Returns ``dJ/dgamma`` for the physical density; the caller applies the
    filter/projection chain rule.  ``snapshot(n, rho~, u~)`` is called with
    gridded fields after each update if given.
    """
    if forward.u_history is None:
        raise ValueError("forward run was not recorded")
    solver = problem.solver
    grid = problem.grid
    d, n_nodes, q = grid.d, grid.size, solver.model.Q
    n_total = problem.n_steps
    if forward.u_history.shape[0] != n_total:
        raise ValueError("forward history is incomplete")
    gamma = np.asarray(gamma, dtype=float)
    kappa_ref = brinkman(gamma, problem.brinkman)
    sens = np.zeros(problem.design_grid.size)
    feq_adj = np.zeros((q, n_nodes)) if terminal is None else np.asarray(terminal, dtype=float).copy()
    kf = 0.0 if problem.kappa_fixed is None else problem.kappa_fixed.ravel()
    state = AdjointState(np.zeros(n_nodes), np.zeros((d, n_nodes)), np.zeros((d, d, n_nodes)))
    for n in range(n_total, 0, -1):
        star = adjoint_stream(feq_adj, solver)
        u = forward.u_history[n - 1].astype(float)
        src_rho, src_u = objective.state_derivative(n, grid.shape)
        st, kappa, u_s = problem.overlap(n, kappa_ref)
        rho_a, u_a = apply_adjoint_sources(star, u, kappa.ravel() + kf, solver, src_rho, src_u, solver.masks)
        dj_dkappa = 3.0 * (u_a * (u.reshape(d, n_nodes) - u_s.reshape(d, n_nodes))).sum(axis=0)
        sens += st.gather(dj_dkappa.reshape(grid.shape))
        feq_adj = rho_a[None, :] + 3.0 * (solver.c @ u_a)
        state = AdjointState(rho_a, u_a, star.s)
        if snapshot is not None:
            snapshot(n, rho_a.reshape(grid.shape), u_a.reshape((d,) + grid.shape))
    sensitivity = brinkman_derivative(gamma, problem.brinkman) * sens.reshape(problem.design_grid.shape)
    return AdjointResult(sensitivity=sensitivity, carry=feq_adj, state=state)
