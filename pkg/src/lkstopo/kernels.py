"""Compiled node loops for the hot paths of the forward solver.

numba is optional.  ``LKSTOPO_BACKEND=numpy`` forces the pure numpy code,
``numba`` requires the compiled kernels and ``auto`` (default) uses them when
numba imports.  Node loops write disjoint outputs, so results do not depend
on the thread count.
"""

from __future__ import annotations

import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None
else:
    if "NUMBA_THREADING_LAYER" not in os.environ:
        # the bundled TBB is too old for numba; skip the noisy probe
        numba.config.THREADING_LAYER = "workqueue"

_choice = os.environ.get("LKSTOPO_BACKEND", "auto").lower()
if _choice not in ("auto", "numba", "numpy"):
    raise ImportError(f"LKSTOPO_BACKEND must be auto, numba or numpy, not {_choice!r}")
if _choice == "numba" and numba is None:
    raise ImportError("LKSTOPO_BACKEND=numba but numba is not installed")

HAVE_NUMBA = numba is not None
_enabled = HAVE_NUMBA and _choice != "numpy"


def use_compiled() -> bool:
    return _enabled


def set_backend(name: str):
    """Switch between ``"numba"`` and ``"numpy"`` at run time."""
    global _enabled
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba is not installed")
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    _enabled = name == "numba"


def set_threads(n: int):
    if HAVE_NUMBA and n > 0:
        numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


if HAVE_NUMBA:

    @numba.njit(parallel=True, cache=True)
    def _stream_moments(rho, u, strain, src, c, w, cc, coef_a, rho_out, u_out):  # pragma: no cover - compiled
        q, n = src.shape
        d = u.shape[0]
        dd = strain.shape[0]
        for node in numba.prange(n):
            r = 0.0
            a0 = 0.0
            a1 = 0.0
            a2 = 0.0
            for i in range(q):
                j = src[i, node] - i * n
                cu = 0.0
                usq = 0.0
                for a in range(d):
                    cu += c[i, a] * u[a, j]
                    usq += u[a, j] * u[a, j]
                f = rho[j] + 3.0 * cu + 4.5 * cu * cu - 1.5 * usq
                if dd:
                    s = 0.0
                    for k in range(dd):
                        s += cc[i, k] * strain[k, j]
                    f += coef_a * s
                f *= w[i]
                r += f
                a0 += c[i, 0] * f
                a1 += c[i, 1] * f
                if d == 3:
                    a2 += c[i, 2] * f
            rho_out[node] = r
            u_out[0, node] = a0
            u_out[1, node] = a1
            if d == 3:
                u_out[2, node] = a2

    @numba.njit(cache=True)
    def _stencil(points, origin, dx, shape, printed, index, weight, lost):  # pragma: no cover - compiled
        n, d = points.shape
        wa = np.empty((d, 4))
        ia = np.empty((d, 4), dtype=np.int64)
        oka = np.empty((d, 4), dtype=np.bool_)
        for p in range(n):
            for a in range(d):
                s = (points[p, a] - origin[a]) / dx
                base = np.int64(np.floor(s)) - 1
                for k in range(4):
                    idx = base + k
                    r = (idx - s) * dx
                    if abs(r) <= 2.0 * dx:
                        if printed:
                            val = (1.0 - np.cos(np.pi * r / 2.0)) / (4.0 * dx)
                        else:
                            val = (1.0 + np.cos(np.pi * r / (2.0 * dx))) / (4.0 * dx)
                    else:
                        val = 0.0
                    wa[a, k] = val * dx
                    oka[a, k] = 0 <= idx < shape[a]
                    ia[a, k] = min(max(idx, 0), shape[a] - 1)
            if d == 2:
                t = 0
                for k0 in range(4):
                    for k1 in range(4):
                        w = wa[0, k0] * wa[1, k1]
                        index[p, t] = ia[0, k0] * shape[1] + ia[1, k1]
                        if oka[0, k0] and oka[1, k1]:
                            weight[p, t] = w
                        else:
                            weight[p, t] = 0.0
                            if w != 0.0:
                                lost[0] = True
                        t += 1
            else:
                t = 0
                for k0 in range(4):
                    for k1 in range(4):
                        for k2 in range(4):
                            w = wa[0, k0] * wa[1, k1] * wa[2, k2]
                            index[p, t] = (ia[0, k0] * shape[1] + ia[1, k1]) * shape[2] + ia[2, k2]
                            if oka[0, k0] and oka[1, k1] and oka[2, k2]:
                                weight[p, t] = w
                            else:
                                weight[p, t] = 0.0
                                if w != 0.0:
                                    lost[0] = True
                            t += 1


    @numba.njit(cache=True)
    def _scatter(index, weight, values, out):  # pragma: no cover - compiled
        n, m = index.shape
        k = values.shape[1]
        for p in range(n):
            for t in range(m):
                j = index[p, t]
                w = weight[p, t]
                for c in range(k):
                    out[c, j] += w * values[p, c]


def scatter(index, weight, values, size):
    """Sequential spread of ``(N, k)`` point values to ``(k, size)`` nodes.

    Accumulates in the same order as ``np.bincount`` over the flattened
    stencil, so both backends give identical sums.
    """
    values = np.ascontiguousarray(values, dtype=float)
    out = np.zeros((values.shape[1], size))
    _scatter(index, weight, values, out)
    return out


def build_stencil(points, origin, dx, shape, variant):
    """Flat node indices and weights ``(N, 4**d)`` plus a clipping flag."""
    points = np.ascontiguousarray(points, dtype=float)
    n, d = points.shape
    index = np.empty((n, 4**d), dtype=np.int64)
    weight = np.empty((n, 4**d))
    lost = np.zeros(1, dtype=np.bool_)
    _stencil(points, np.asarray(origin, dtype=float), float(dx), np.asarray(shape, dtype=np.int64), variant == "printed", index, weight, lost)
    return index, weight, bool(lost[0])


def stream_moments(rho, u, strain, src, c, w, cc, coef_a):
    """Moments ``(rho*, u*)`` of equilibria gathered through ``src``.

    ``rho`` is ``(N,)``, ``u`` ``(d, N)``, ``strain`` ``(d*d, N)`` or
    ``(0, N)`` and ``src`` the flat ``(Q, N)`` upstream index table.
    """
    n = rho.shape[0]
    rho_out = np.empty(n)
    u_out = np.empty((u.shape[0], n))
    _stream_moments(rho, u, strain, src, c, w, cc, float(coef_a), rho_out, u_out)
    return rho_out, u_out
