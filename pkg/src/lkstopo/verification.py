"""Verification scenarios with pass/fail reports.

* :func:`taylor_couette` spins an inner cylinder inside a fixed outer one and
  compares the steady azimuthal speed on a radius with the analytic
  circular-Couette profile.
* :func:`sensitivity_fda` compares adjoint design sensitivities of the
  wall-pressure objective with central finite differences along a line of
  design nodes for a rotating elliptical body.
"""

from __future__ import annotations

import concurrent.futures
import csv
import dataclasses
import io
import math
import time
import warnings

import numpy as np

from .adjoint import run_adjoint
from .design import BrinkmanParams, brinkman
from .forward import FlowProblem, run_forward
from .lattice import UniformGrid
from .motion import ConstantRotation, FixedTranslation, MotionSpec
from .objectives import Objective, ObjectiveSpec, boundary_nodes
from .overlap import stencil_at

TC_SCALES = (1.0, 0.5, 0.25)
STEADY_TOL = 1e-8


@dataclasses.dataclass
class VerificationReport:
    """Samples, error norms and verdict of one scenario.

    ``passed`` is recomputed from the norms and thresholds on construction,
    so it cannot drift from them.
    """

    scenario: str
    coordinates: np.ndarray
    computed: np.ndarray
    reference: np.ndarray
    thresholds: dict
    info: dict = dataclasses.field(default_factory=dict)
    norms: dict = dataclasses.field(init=False)
    passed: bool = dataclasses.field(init=False)
    mask: np.ndarray | None = None  # samples entering the norms; all if None

    def __post_init__(self):
        self.coordinates = np.asarray(self.coordinates, dtype=float)
        self.computed = np.asarray(self.computed, dtype=float)
        self.reference = np.asarray(self.reference, dtype=float)
        m = np.ones(self.computed.shape, dtype=bool) if self.mask is None else np.asarray(self.mask, dtype=bool)
        self.norms = error_norms(self.computed[m], self.reference[m])
        self.passed = verdict(self.norms, self.thresholds, self.info)

    def to_text(self) -> str:
        lines = [f"scenario={self.scenario}", f"passed={str(self.passed).lower()}"]
        lines += [f"{k}={_fmt(v)}" for k, v in self.norms.items()]
        lines += [f"threshold.{k}={_fmt(v)}" for k, v in self.thresholds.items()]
        lines += [f"{k}={_fmt(v)}" for k, v in self.info.items()]
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("coordinate", "computed", "reference", "in_norm"))
        m = np.ones(self.computed.shape, dtype=bool) if self.mask is None else self.mask
        for x, c, r, k in zip(self.coordinates, self.computed, self.reference, m):
            w.writerow((repr(float(x)), repr(float(c)), repr(float(r)), int(bool(k))))
        return buf.getvalue()


def _fmt(v) -> str:
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return repr(v)
    return str(v)


def error_norms(computed: np.ndarray, reference: np.ndarray) -> dict:
    """Relative L2 error, max relative error and cosine similarity."""
    computed = np.asarray(computed, dtype=float)
    reference = np.asarray(reference, dtype=float)
    diff = computed - reference
    ref_norm = float(np.linalg.norm(reference))
    denom = float(np.linalg.norm(computed)) * ref_norm
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.abs(diff) / np.abs(reference)
    diff_norm = float(np.linalg.norm(diff))
    if ref_norm > 0:
        l2 = diff_norm / ref_norm
    else:
        l2 = 0.0 if diff_norm == 0 else math.inf
    return {
        "l2_rel": l2,
        "max_rel": float(np.max(rel)) if rel.size else math.nan,
        "cosine": float(computed @ reference / denom) if denom > 0 else 0.0,
    }


def verdict(norms: dict, thresholds: dict, info: dict) -> bool:
    """Pass when every threshold holds (``cosine`` is a lower bound, the
    others upper bounds) and no ``info`` flag named ``*_ok`` is false."""
    for key, limit in thresholds.items():
        value = norms[key]
        if not math.isfinite(value):
            return False
        if key == "cosine" and not value > limit:
            return False
        if key != "cosine" and not value < limit:
            return False
    return all(v for k, v in info.items() if k.endswith("_ok"))


# --- Taylor-Couette ----------------------------------------------------------


def couette_profile(r, r1: float, r2: float, u_d: float) -> np.ndarray:
    """Azimuthal speed between a cylinder of radius ``r1`` turning with surface
    speed ``u_d`` and a resting cylinder of radius ``r2``."""
    r = np.asarray(r, dtype=float)
    k = u_d * r1 / (r2**2 - r1**2)
    return -k * r + k * r2**2 / r


@dataclasses.dataclass(frozen=True)
class CouetteSetup:
    """Geometry in grid spacings for a given scale (full size: L=200, r1=45, r2=70)."""

    scale: float = 1.0
    u_d: float = 0.05

    @property
    def length(self) -> int:
        return int(round(200 * self.scale))

    @property
    def r1(self) -> float:
        return 45.0 * self.scale

    @property
    def r2(self) -> float:
        return 70.0 * self.scale

    @property
    def period(self) -> float:
        return 2.0 * math.pi * self.r1 / self.u_d if self.u_d else math.inf


def couette_problem(setup: CouetteSetup, kappa_max: float = 1000.0, A: float = -0.5, n_steps: int = 1):
    """Flow problem with the inner disk on a rotating design grid and the outer
    ring on a resting one; returns ``(problem, gamma_inner)``."""
    n = setup.length + 1
    centre = setup.length / 2.0
    grid = UniformGrid((n, n))
    brink = BrinkmanParams(kappa_max, 0.1)
    nd = 2 * int(math.ceil(setup.r1)) + 5
    dgrid = UniformGrid((nd, nd))
    dc = (nd - 1) / 2.0
    xi = dgrid.coordinates()
    inner = (np.hypot(xi[0] - dc, xi[1] - dc) <= setup.r1).astype(float)
    rotation = ConstantRotation(setup.period) if setup.u_d else None
    motion = MotionSpec(pivot=(dc, dc), translation=FixedTranslation((centre, centre)), **({"rotation": rotation} if rotation else {}))
    x = grid.coordinates()
    outer = (np.hypot(x[0] - centre, x[1] - centre) >= setup.r2).astype(float)
    with warnings.catch_warnings():
        # nodes on the domain edge lie far outside r2; losing their spread is harmless
        warnings.simplefilter("ignore", RuntimeWarning)
        st = stencil_at(0.0, MotionSpec(pivot=(centre, centre)), grid, grid)
    kappa_outer = st.scatter(brinkman(outer, brink).ravel())
    problem = FlowProblem(grid, dgrid, motion, n_steps=n_steps, A=A, brinkman=brink, kappa_fixed=kappa_outer, history_dtype="float64")
    return problem, inner


def taylor_couette(
    scale: float = 1.0,
    u_d: float = 0.05,
    kappa_max: float = 1000.0,
    A: float = -0.5,
    margin: float = 4.0,
    threshold: float = 0.05,
    max_steps: int | None = None,
    steady_tol: float = STEADY_TOL,
    progress=None,
) -> VerificationReport:
    """Run the rotating-cylinder case to steady state and compare profiles.

    The run advances in blocks of a tenth of the rotation period and stops
    once no node's velocity changed by more than ``steady_tol`` over a block.
    Samples lie on the radius from the centre towards ``+x``; the error norms
    use ``r1 + m <= r <= r2 - m`` with ``m = margin * scale``, so every
    scale compares the same physical band (``margin`` full-scale spacings).
    """
    if scale not in TC_SCALES:
        raise ValueError(f"scale must be one of {TC_SCALES}")
    setup = CouetteSetup(scale, u_d)
    block = max(1, int(round(setup.period / 10))) if u_d else 100
    max_steps = max_steps or 40 * block
    problem, gamma = couette_problem(setup, kappa_max, A, n_steps=block)
    t0 = time.perf_counter()
    state = None
    steps = 0
    residual = math.inf
    while steps < max_steps:
        fw = run_forward(problem, gamma, initial=state, record=False)
        if state is not None:
            residual = float(np.abs(fw.final.u - state.u).max())
        elif not u_d:
            residual = float(np.abs(fw.final.u).max())
        state = fw.final
        steps += block
        if progress is not None:
            progress(steps, residual)
        if residual < steady_tol:
            break
    c = setup.length // 2
    speed = np.hypot(state.u[0, c:, c], state.u[1, c:, c])
    r = np.arange(speed.size, dtype=float) + (setup.length / 2.0 - c)
    keep = (r >= setup.r1) & (r <= setup.r2)
    r, speed = r[keep], speed[keep]
    ref = couette_profile(r, setup.r1, setup.r2, u_d) if u_d else np.zeros_like(r)
    m = margin * scale
    mask = (r >= setup.r1 + m) & (r <= setup.r2 - m)
    if not mask.any():
        raise ValueError(f"margin {margin} leaves no samples in the gap")
    info = {
        "scale": scale,
        "u_d": u_d,
        "kappa_max": kappa_max,
        "A": A,
        "margin": m,
        "steps": steps,
        "residual": residual,
        "steady_ok": residual < steady_tol,
        "runtime_s": round(time.perf_counter() - t0, 3),
    }
    thresholds = {"max_rel": threshold} if u_d else {}
    return VerificationReport("taylor-couette", r, speed, ref, thresholds, info, mask=mask)


# --- adjoint vs finite differences -------------------------------------------


@dataclasses.dataclass(frozen=True)
class SensitivitySetup:
    """Rotating ellipse (gamma 0.9 in 0.1) in a closed box, J on all walls.

    Full size: analysis 150x150, design 100x100, period 3000, ellipse
    semi-axes 30 x 15; everything scales linearly with ``scale``.
    """

    scale: float = 0.5
    semi_axes: tuple[float, float] = (30.0, 15.0)
    kappa_max: float = 1000.0
    A: float = 0.25

    def build(self):
        na = int(round(150 * self.scale))
        nd = int(round(100 * self.scale))
        period = 3000.0 * self.scale
        n_steps = int(round(period))
        grid = UniformGrid((na, na))
        dgrid = UniformGrid((nd, nd))
        dc, ac = (nd - 1) / 2.0, (na - 1) / 2.0
        motion = MotionSpec(pivot=(dc, dc), rotation=ConstantRotation(period), translation=FixedTranslation((ac, ac)))
        problem = FlowProblem(
            grid, dgrid, motion, n_steps=n_steps, A=self.A, brinkman=BrinkmanParams(self.kappa_max, 0.1), history_dtype="float64"
        )
        xi = dgrid.coordinates()
        a, b = (s * self.scale for s in self.semi_axes)
        inside = ((xi[0] - dc) / a) ** 2 + ((xi[1] - dc) / b) ** 2 <= 1.0
        gamma = np.where(inside, 0.9, 0.1)
        objective = Objective(ObjectiveSpec("pressure", boundary_nodes(grid.shape), window=(0.0, period)), n_steps, problem.dt)
        return problem, gamma, objective


def _objective_at(args):
    problem, gamma, objective, node, h = args
    out = []
    for sign in (1.0, -1.0):
        g = gamma.copy()
        g[node] += sign * h
        out.append(run_forward(problem, g, objective, record=False).objective)
    return (out[0] - out[1]) / (2.0 * h)


def central_differences(problem, gamma, objective, nodes, h, workers: int = 1) -> np.ndarray:
    """Central-difference dJ/dgamma at the given design nodes."""
    jobs = [(problem, gamma, objective, node, h) for node in nodes]
    if workers > 1:
        with concurrent.futures.ProcessPoolExecutor(workers) as pool:
            return np.array(list(pool.map(_objective_at, jobs)))
    return np.array([_objective_at(j) for j in jobs])


def sensitivity_fda(
    scale: float = 0.5,
    fd_step: float = 1e-3,
    stride: int = 2,
    richardson_every: int = 4,
    cosine_min: float = 0.99,
    l2_max: float = 0.05,
    richardson_max: float = 0.01,
    workers: int = 1,
    setup: SensitivitySetup | None = None,
    progress=None,
) -> VerificationReport:
    """Adjoint versus central differences along the design midline.

    Every ``stride``-th node of the middle design row is probed.  On every
    ``richardson_every``-th probe the difference is repeated with half the
    step; the FDA counts as converged when that changes the probed values by
    less than ``richardson_max`` relative to their norm.
    """
    if not 1e-4 <= fd_step <= 1e-2:
        raise ValueError("fd_step must lie in [1e-4, 1e-2]")
    setup = setup or SensitivitySetup(scale)
    problem, gamma, objective = setup.build()
    t0 = time.perf_counter()
    fw = run_forward(problem, gamma, objective)
    adj = run_adjoint(problem, gamma, fw, objective).sensitivity
    nd = gamma.shape[0]
    row = (nd - 1) // 2
    cols = np.arange(0, gamma.shape[1], stride)
    nodes = [(row, int(j)) for j in cols]
    fda = central_differences(problem, gamma, objective, nodes, fd_step, workers)
    if progress is not None:
        progress("fda", len(nodes))
    sub = list(range(0, len(nodes), richardson_every))
    fda_half = central_differences(problem, gamma, objective, [nodes[i] for i in sub], fd_step / 2.0, workers)
    change = float(np.linalg.norm(fda[sub] - fda_half))
    gap = float(np.linalg.norm(adj[row, cols][sub] - fda[sub]))
    rich = change / max(float(np.linalg.norm(fda[sub])), 1e-300)
    info = {
        "scale": scale,
        "fd_step": fd_step,
        "probes": len(nodes),
        "objective": fw.objective,
        "richardson_change": rich,
        "richardson_change_over_gap": change / gap if gap > 0 else math.inf,
        "richardson_ok": rich < richardson_max,
        "runtime_s": round(time.perf_counter() - t0, 3),
    }
    thresholds = {"cosine": cosine_min, "l2_rel": l2_max}
    return VerificationReport("sensitivity", cols.astype(float), adj[row, cols], fda, thresholds, info)


__all__ = [
    "CouetteSetup",
    "SensitivitySetup",
    "VerificationReport",
    "central_differences",
    "couette_profile",
    "error_norms",
    "sensitivity_fda",
    "taylor_couette",
    "verdict",
]
