"""Method of Moving Asymptotes for box-constrained design updates.

Standard formulation with artificial variables::

    min  f0(x) + sum_i (c_i y_i + d_i y_i^2 / 2)
    s.t. f_i(x) - y_i <= 0,  xmin <= x <= xmax,  y >= 0

Each update builds the separable convex approximation around the current
iterate and solves it through its dual: for fixed multipliers every ``x_j``
and ``y_i`` has a closed form, and the concave dual is maximised one
multiplier at a time by bracketed root finding on its gradient.
"""

from __future__ import annotations

import dataclasses

import numpy as np
from scipy.optimize import brentq

RAA0 = 1e-5
ALBEFA = 0.1
ASY_INIT = 0.5
ASY_INCR = 1.2
ASY_DECR = 0.7
ASY_MIN_GAP = 0.01
DUAL_TOL = 1e-10
MAX_SWEEPS = 200


class MmaError(RuntimeError):
    pass


@dataclasses.dataclass
class MmaState:
    """Asymptotes and iterate history of an MMA run.

    Attributes:
      low, upp: current lower/upper asymptotes per variable.
      xold1, xold2: iterates one and two updates back.
      move: move limit as a fraction of the box width.
      iteration: number of completed updates.
    """

    low: np.ndarray
    upp: np.ndarray
    xold1: np.ndarray
    xold2: np.ndarray
    move: float = 0.2
    iteration: int = 0

    @classmethod
    def new(cls, x: np.ndarray, move: float = 0.2) -> "MmaState":
        x = np.asarray(x, dtype=float).ravel()
        return cls(low=np.zeros_like(x), upp=np.ones_like(x), xold1=x.copy(), xold2=x.copy(), move=move)


def _dual_solve(low, upp, alfa, beta, p0, q0, P, Q, b, c, d):
    """Solve the MMA subproblem through its dual; returns ``x``.

    The dual gradient in ``lam_i`` is ``g_i(x(lam)) - b_i - y_i(lam)``, which
    is continuous and non-increasing in ``lam_i``, so each coordinate step is
    a bracketed root find.  Raises :class:`MmaError` when the KKT residual
    does not fall below ``DUAL_TOL`` within ``MAX_SWEEPS`` sweeps.
    """
    m = b.size

    def primal(lam):
        sp = np.sqrt(p0 + lam @ P)
        sq = np.sqrt(q0 + lam @ Q)
        return np.clip((sp * low + sq * upp) / (sp + sq), alfa, beta)

    def dual_grad(lam):
        x = primal(lam)
        gx = P @ (1.0 / (upp - x)) + Q @ (1.0 / (x - low))
        y = np.maximum(0.0, (lam - c) / d)
        return gx - b - y, np.abs(gx) + np.abs(b) + y

    lam = np.zeros(m)
    kkt = np.inf
    for _ in range(MAX_SWEEPS):
        for i in range(m):

            def gi(t):
                trial = lam.copy()
                trial[i] = t
                return dual_grad(trial)[0][i]

            if gi(0.0) <= 0.0:
                lam[i] = 0.0
                continue
            hi = max(1.0, c[i])
            while gi(hi) > 0.0:
                hi *= 2.0
            lam[i] = brentq(gi, 0.0, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
        g, size = dual_grad(lam)
        resid = np.where(lam > 0.0, np.abs(g), np.maximum(g, 0.0)) / (size + 1.0)
        kkt = float(resid.max())
        if not np.isfinite(kkt):
            break
        if kkt < DUAL_TOL:
            return primal(lam)
    raise MmaError(f"MMA subproblem did not converge (KKT residual {kkt:.3e})")


def mma_update(
    x: np.ndarray,
    df0dx: np.ndarray,
    fval: np.ndarray,
    dfdx: np.ndarray,
    state: MmaState,
    xmin: float | np.ndarray = 0.0,
    xmax: float | np.ndarray = 1.0,
    c: float = 1000.0,
    d: float = 1.0,
) -> np.ndarray:
    """One MMA step; returns the new iterate and advances ``state``.

    ``fval`` holds the ``m`` constraint values (``<= 0`` feasible) and
    ``dfdx`` their gradients as ``(m, n)``.  ``m`` may be zero.
    """
    shape = np.shape(x)
    x = np.asarray(x, dtype=float).ravel()
    n = x.size
    df0dx = np.asarray(df0dx, dtype=float).ravel()
    fval = np.atleast_1d(np.asarray(fval, dtype=float))
    dfdx = np.asarray(dfdx, dtype=float).reshape(fval.size, n)
    if not (np.all(np.isfinite(df0dx)) and np.all(np.isfinite(dfdx)) and np.all(np.isfinite(fval))):
        raise MmaError("non-finite sensitivities")
    if fval.size == 0:
        fval = np.array([-1.0])
        dfdx = np.zeros((1, n))
    xmin = np.broadcast_to(np.asarray(xmin, dtype=float), (n,))
    xmax = np.broadcast_to(np.asarray(xmax, dtype=float), (n,))
    if not np.any(df0dx) and not np.any(dfdx):
        state.iteration += 1
        return x.reshape(shape)

    try:
        xnew = _mma_step(x, df0dx, fval, dfdx, state, xmin, xmax, c, d, state.move)
    except MmaError:
        xnew = _mma_step(x, df0dx, fval, dfdx, state, xmin, xmax, c, d, 0.5 * state.move)
    return xnew.reshape(shape)


def _mma_step(x, df0dx, fval, dfdx, state, xmin, xmax, c, d, move):
    m, n = fval.size, x.size
    it = state.iteration + 1
    width = xmax - xmin
    if it <= 2:
        low = x - ASY_INIT * width
        upp = x + ASY_INIT * width
    else:
        zzz = (x - state.xold1) * (state.xold1 - state.xold2)
        factor = np.ones(n)
        factor[zzz > 0] = ASY_INCR
        factor[zzz < 0] = ASY_DECR
        low = x - factor * (state.xold1 - state.low)
        upp = x + factor * (state.upp - state.xold1)
        low = np.clip(low, x - 10.0 * width, x - ASY_MIN_GAP * width)
        upp = np.clip(upp, x + ASY_MIN_GAP * width, x + 10.0 * width)
    alfa = np.maximum.reduce([low + ALBEFA * (x - low), x - move * width, xmin])
    beta = np.minimum.reduce([upp - ALBEFA * (upp - x), x + move * width, xmax])
    xmami = np.maximum(width, 1e-5)
    ux1 = upp - x
    xl1 = x - low
    p0 = np.maximum(df0dx, 0.0)
    q0 = np.maximum(-df0dx, 0.0)
    pq0 = 0.001 * (p0 + q0) + RAA0 / xmami
    p0 = (p0 + pq0) * ux1**2
    q0 = (q0 + pq0) * xl1**2
    P = np.maximum(dfdx, 0.0)
    Q = np.maximum(-dfdx, 0.0)
    PQ = 0.001 * (P + Q) + RAA0 / xmami[None, :]
    P = (P + PQ) * (ux1**2)[None, :]
    Q = (Q + PQ) * (xl1**2)[None, :]
    b = P @ (1.0 / ux1) + Q @ (1.0 / xl1) - fval
    xnew = _dual_solve(low, upp, alfa, beta, p0, q0, P, Q, b, np.full(m, c), np.full(m, d))
    state.xold2 = state.xold1.copy()
    state.xold1 = x.copy()
    state.low, state.upp = low, upp
    state.iteration = it
    state.move = move
    return np.clip(xnew, xmin, xmax)
