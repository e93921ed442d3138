"""Forward LKS solver with moving-object penalisation.

One time step follows the order: body motion -> overlap maps (kappa, u_S)
-> equilibrium streaming -> penalisation -> macroscopic boundary values.
Only rho and u are stored; populations exist transiently as equilibria.

Streaming gathers ``f_eq`` from the upstream node ``x - c_i``.  On periodic
axes the index wraps; on all other faces it is clamped to the boundary node,
which conserves mass next to resting walls.
"""

from __future__ import annotations

import dataclasses
import logging
import math

import numpy as np

from . import kernels
from .design import BrinkmanParams, brinkman
from .lattice import FlowState, Gradient, LatticeModel, UniformGrid, model_for_dimension
from .motion import MotionSpec, body_velocity
from .objectives import Objective
from .overlap import OverlapStencil, design_points, stencil_at

log = logging.getLogger(__name__)

FACE_NAMES = ("xmin", "xmax", "ymin", "ymax", "zmin", "zmax")
DIVERGENCE_LIMIT = 0.5


class SolverDivergence(RuntimeError):
    def __init__(self, step: int, detail: str):
        super().__init__(f"solver diverged at step {step}: {detail}")
        self.step = step


def face_slice(name: str, d: int) -> tuple:
    axis = FACE_NAMES.index(name) // 2
    if axis >= d:
        raise ValueError(f"face {name!r} does not exist in {d}D")
    sl = [slice(None)] * d
    sl[axis] = 0 if name.endswith("min") else -1
    return tuple(sl)


@dataclasses.dataclass(frozen=True)
class Wall:
    """No-slip wall, u = 0."""


@dataclasses.dataclass(frozen=True)
class VelocityInlet:
    velocity: tuple[float, ...]


@dataclasses.dataclass(frozen=True)
class PressureOutlet:
    """Prescribed density and tangential velocity; normal velocity is free."""

    rho: float = 1.0
    tangential: float = 0.0


@dataclasses.dataclass(frozen=True)
class Periodic:
    pass


@dataclasses.dataclass
class BoundarySpec:
    """One condition per grid face; unspecified faces are walls."""

    faces: dict[str, object] = dataclasses.field(default_factory=dict)

    def condition(self, name: str):
        return self.faces.get(name, Wall())

    def periodic_axes(self, d: int) -> tuple[bool, ...]:
        out = []
        for a in range(d):
            lo = isinstance(self.condition(FACE_NAMES[2 * a]), Periodic)
            hi = isinstance(self.condition(FACE_NAMES[2 * a + 1]), Periodic)
            if lo != hi:
                raise ValueError(f"periodic faces must come in pairs (axis {a})")
            out.append(lo)
        return tuple(out)

    @classmethod
    def periodic(cls, d: int) -> "BoundarySpec":
        return cls({name: Periodic() for name in FACE_NAMES[: 2 * d]})

    @classmethod
    def walls(cls) -> "BoundarySpec":
        return cls({})


@dataclasses.dataclass
class BoundaryMasks:
    """Node-wise record of which macroscopic values a boundary overwrites."""

    rho_fixed: np.ndarray
    rho_value: np.ndarray
    u_fixed: np.ndarray  # (d, ...)
    u_value: np.ndarray

    @classmethod
    def build(cls, spec: BoundarySpec, shape: tuple[int, ...]) -> "BoundaryMasks":
        d = len(shape)
        spec.periodic_axes(d)
        rho_fixed = np.zeros(shape, dtype=bool)
        rho_value = np.zeros(shape)
        u_fixed = np.zeros((d,) + shape, dtype=bool)
        u_value = np.zeros((d,) + shape)
        velocity_nodes = np.zeros(shape, dtype=bool)
        # pressure faces first so that velocity conditions win at shared corners
        for name in FACE_NAMES[: 2 * d]:
            cond = spec.condition(name)
            if isinstance(cond, PressureOutlet):
                sl = face_slice(name, d)
                axis = FACE_NAMES.index(name) // 2
                rho_fixed[sl] = True
                rho_value[sl] = cond.rho
                for a in range(d):
                    if a != axis:
                        u_fixed[(a,) + sl] = True
                        u_value[(a,) + sl] = cond.tangential
        for name in FACE_NAMES[: 2 * d]:
            cond = spec.condition(name)
            if isinstance(cond, (Wall, VelocityInlet)):
                sl = face_slice(name, d)
                vel = np.zeros(d) if isinstance(cond, Wall) else np.asarray(cond.velocity, dtype=float)
                if vel.shape != (d,):
                    raise ValueError(f"inlet velocity on {name} must have {d} components")
                velocity_nodes[sl] = True
                for a in range(d):
                    u_fixed[(a,) + sl] = True
                    u_value[(a,) + sl] = vel[a]
            elif not isinstance(cond, (PressureOutlet, Periodic)):
                raise TypeError(f"unknown boundary condition {cond!r}")
        rho_fixed &= ~velocity_nodes
        return cls(rho_fixed, rho_value, u_fixed, u_value)

    def apply(self, rho: np.ndarray, u: np.ndarray):
        np.copyto(rho, self.rho_value, where=self.rho_fixed)
        np.copyto(u, self.u_value, where=self.u_fixed)
        return rho, u


def streaming_sources(shape: tuple[int, ...], model: LatticeModel, periodic: tuple[bool, ...]) -> np.ndarray:
    """Flat upstream indices ``i*N + idx(x - c_i)``, shape ``(Q, N)``."""
    d = len(shape)
    n = int(np.prod(shape))
    idx = np.indices(shape).reshape(d, -1)
    out = np.empty((model.Q, n), dtype=np.int64)
    for i, ci in enumerate(model.c):
        up = idx - ci[:, None]
        for a in range(d):
            if periodic[a]:
                up[a] %= shape[a]
            else:
                np.clip(up[a], 0, shape[a] - 1, out=up[a])
        out[i] = i * n + np.ravel_multi_index(tuple(up), shape)
    return out


class LKSSolver:
    """Precomputed operators for LKS steps on one analysis grid."""

    def __init__(self, grid: UniformGrid, boundaries: BoundarySpec | None = None, A: float = 0.25, model: LatticeModel | None = None):
        self.grid = grid
        self.model = model or model_for_dimension(grid.d)
        if self.model.d != grid.d:
            raise ValueError("lattice model and grid dimensions differ")
        self.boundaries = boundaries or BoundarySpec.walls()
        self.A = float(A)
        self.periodic = self.boundaries.periodic_axes(grid.d)
        self.masks = BoundaryMasks.build(self.boundaries, grid.shape)
        self.grad = Gradient(grid.shape, grid.dx, self.periodic)
        self.src = streaming_sources(grid.shape, self.model, self.periodic)
        self.src_flat = self.src.ravel()
        c = self.model.c.astype(float)
        self.c = c
        self.w = self.model.w
        d = grid.d
        self.cc = np.einsum("ia,ib->iab", c, c).reshape(self.model.Q, d * d)

    # --- building blocks -------------------------------------------------
    def equilibria(self, rho: np.ndarray, u: np.ndarray) -> np.ndarray:
        """f_eq for every node, shape ``(Q, N)`` (flattened grid)."""
        d, n = self.grid.d, self.grid.size
        uf = u.reshape(d, n)
        cu = self.c @ uf
        feq = rho.reshape(1, n) + 3.0 * cu + 4.5 * cu * cu - 1.5 * (uf * uf).sum(axis=0)
        if self.A != 0.0:
            g = self.grad(u).reshape(d, d, n)
            strain = (g + g.transpose(1, 0, 2)).reshape(d * d, n)
            feq += (self.grid.dx * self.A) * (self.cc @ strain)
        return self.w[:, None] * feq

    def stream(self, feq: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Gather streamed moments (rho*, u*) from upstream equilibria."""
        g = feq.ravel()[self.src]
        rho = g.sum(axis=0).reshape(self.grid.shape)
        u = (self.c.T @ g).reshape((self.grid.d,) + self.grid.shape)
        return rho, u

    def stream_collide(self, state: FlowState) -> tuple[np.ndarray, np.ndarray]:
        if not kernels.use_compiled():
            return self.stream(self.equilibria(state.rho, state.u))
        d, n = self.grid.d, self.grid.size
        if self.A != 0.0:
            g = self.grad(state.u).reshape(d, d, n)
            strain = np.ascontiguousarray((g + g.transpose(1, 0, 2)).reshape(d * d, n))
        else:
            strain = np.empty((0, n))
        rho, u = kernels.stream_moments(
            np.ascontiguousarray(state.rho.reshape(n), dtype=float),
            np.ascontiguousarray(state.u.reshape(d, n), dtype=float),
            strain,
            self.src,
            self.c,
            self.w,
            self.cc,
            self.grid.dx * self.A,
        )
        return rho.reshape(self.grid.shape), u.reshape((d,) + self.grid.shape)


def apply_penalization(rho_star, u_star, kappa, u_s, kappa_fixed=None):
    """rho = rho*, u = (u* + kappa u_S) / (1 + kappa [+ kappa_fixed])."""
    denom = 1.0 + kappa if kappa_fixed is None else 1.0 + kappa + kappa_fixed
    return rho_star, (u_star + kappa * u_s) / denom


def apply_boundaries(rho, u, masks: BoundaryMasks):
    return masks.apply(rho, u)


@dataclasses.dataclass
class FlowProblem:
    """Everything a forward/adjoint run needs except the design itself."""

    grid: UniformGrid
    design_grid: UniformGrid
    motion: MotionSpec
    n_steps: int
    boundaries: BoundarySpec = dataclasses.field(default_factory=BoundarySpec.walls)
    A: float = 0.25
    brinkman: BrinkmanParams = dataclasses.field(default_factory=BrinkmanParams)
    kappa_fixed: np.ndarray | None = None
    kernel_variant: str = "standard"
    history_dtype: str = "float32"
    rho0: float = 1.0

    def __post_init__(self):
        if self.grid.d != self.design_grid.d or self.grid.d != self.motion.d:
            raise ValueError("grid, design grid and motion dimensions differ")
        if self.n_steps < 1:
            raise ValueError("n_steps must be positive")
        self._solver = None
        self._static = None

    @property
    def dt(self) -> float:
        return self.grid.dx

    @property
    def solver(self) -> LKSSolver:
        if self._solver is None:
            self._solver = LKSSolver(self.grid, self.boundaries, self.A)
        return self._solver

    def time(self, n: int) -> float:
        return n * self.dt

    def stencil(self, n: int) -> OverlapStencil:
        if self.motion.is_stationary():
            if self._static is None:
                self._static = stencil_at(0.0, self.motion, self.design_grid, self.grid, self.kernel_variant)
            return self._static
        return stencil_at(self.time(n), self.motion, self.design_grid, self.grid, self.kernel_variant)

    def body_velocity(self, n: int) -> np.ndarray:
        return body_velocity(design_points(self.design_grid), self.time(n), self.motion)

    def overlap(self, n: int, kappa_ref: np.ndarray):
        st = self.stencil(n)
        return st, st.scatter(kappa_ref.ravel()), st.scatter(self.body_velocity(n))


def advance(problem: FlowProblem, state: FlowState, n: int, kappa_ref: np.ndarray) -> FlowState:
    """One full time step producing state ``n`` from state ``n - 1``."""
    solver = problem.solver
    _, kappa, u_s = problem.overlap(n, kappa_ref)
    rho_star, u_star = solver.stream_collide(state)
    rho, u = apply_penalization(rho_star, u_star, kappa, u_s, problem.kappa_fixed)
    solver.masks.apply(rho, u)
    umax = float(np.abs(u).max())
    if not math.isfinite(umax) or umax > DIVERGENCE_LIMIT:
        raise SolverDivergence(n, f"max |u| = {umax}")
    return FlowState(rho, u)


class CheckpointedHistory:
    """Velocity history kept as every ``stride``-th state plus one live segment.

    Indexing with ``n - 1`` returns ``u`` of state ``n`` like the dense array.
    A request outside the cached segment recomputes it from the preceding
    checkpoint, so a backward sweep costs one extra forward run in total.
    """

    def __init__(self, problem: FlowProblem, kappa_ref: np.ndarray, stride: int):
        if stride < 1:
            raise ValueError("checkpoint stride must be positive")
        self.problem = problem
        self.kappa_ref = kappa_ref
        self.stride = int(stride)
        self.checkpoints: dict[int, FlowState] = {}
        self._segment_start = None
        self._segment = None
        self.recomputed = 0

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.problem.n_steps, self.problem.grid.d) + self.problem.grid.shape

    def store(self, n: int, state: FlowState):
        if n % self.stride == 0:
            self.checkpoints[n] = state.copy()

    def __getitem__(self, index: int) -> np.ndarray:
        n = int(index) + 1
        if not 1 <= n <= self.problem.n_steps:
            raise IndexError(index)
        start = ((n - 1) // self.stride) * self.stride
        if self._segment_start != start:
            state = self.checkpoints[start].copy()
            stop = min(start + self.stride, self.problem.n_steps)
            seg = np.empty((stop - start, self.problem.grid.d) + self.problem.grid.shape)
            for m in range(start + 1, stop + 1):
                state = advance(self.problem, state, m, self.kappa_ref)
                seg[m - start - 1] = state.u
            self.recomputed += stop - start
            self._segment_start, self._segment = start, seg
        return self._segment[n - start - 1]


@dataclasses.dataclass
class ForwardResult:
    final: FlowState
    objective: float
    u_history: np.ndarray | CheckpointedHistory | None  # states 1..n_steps
    series: np.ndarray  # per-step spatial mean of the objective integrand
    steps: int


def run_forward(
    problem: FlowProblem,
    gamma: np.ndarray,
    objective: Objective | None = None,
    initial: FlowState | None = None,
    record: bool = True,
    snapshot=None,
    checkpoint_stride: int | None = None,
) -> ForwardResult:
    """Advance the LKS ``problem.n_steps`` steps for physical density ``gamma``.

    With ``checkpoint_stride`` the history keeps only every k-th state and the
    adjoint sweep recomputes the rest.  ``snapshot(n, state)``, if given, is
    called after every step.
    """
    grid = problem.grid
    gamma = np.asarray(gamma, dtype=float)
    if gamma.shape != problem.design_grid.shape:
        raise ValueError("design field does not match the design grid")
    kappa_ref = brinkman(gamma, problem.brinkman)
    state = initial.copy() if initial is not None else FlowState.at_rest(grid.shape, problem.rho0)
    problem.solver.masks.apply(state.rho, state.u)
    n_total = problem.n_steps
    hist = None
    if record and checkpoint_stride:
        hist = CheckpointedHistory(problem, kappa_ref, checkpoint_stride)
        hist.store(0, state)
    elif record:
        hist = np.empty((n_total, grid.d) + grid.shape, dtype=problem.history_dtype)
    series = np.full(n_total + 1, np.nan)
    value = 0.0
    if objective is not None:
        series[0] = objective.sample(state.rho, state.u)
        value += objective.contribution(0, state.rho, state.u)
    for n in range(1, n_total + 1):
        state = advance(problem, state, n, kappa_ref)
        if isinstance(hist, CheckpointedHistory):
            hist.store(n, state)
        elif hist is not None:
            hist[n - 1] = state.u
        if objective is not None:
            series[n] = objective.sample(state.rho, state.u)
            value += objective.contribution(n, state.rho, state.u)
        if snapshot is not None:
            snapshot(n, state)
    return ForwardResult(final=state, objective=value, u_history=hist, series=series, steps=n_total)


def run_periods(
    problem: FlowProblem,
    gamma: np.ndarray,
    objective: Objective,
    periods: int,
    initial: FlowState | None = None,
    snapshot=None,
) -> tuple[list[float], FlowState, np.ndarray]:
    """Repeat the forward run ``periods`` times, each continuing from the last.

    Returns the objective of every repetition, the final state and the
    integrand series over all steps (``periods * n_steps + 1`` samples).
    ``snapshot(n, state)`` receives the global step index.
    """
    if periods < 1:
        raise ValueError("periods must be positive")
    values, series = [], []
    state = initial
    for k in range(periods):
        offset = k * problem.n_steps
        hook = None if snapshot is None else (lambda n, st, offset=offset: snapshot(n + offset, st))
        fw = run_forward(problem, gamma, objective, initial=state, record=False, snapshot=hook)
        state = fw.final
        values.append(fw.objective)
        series.append(fw.series if k == 0 else fw.series[1:])
    return values, state, np.concatenate(series)


__all__ = [
    "BoundaryMasks",
    "BoundarySpec",
    "CheckpointedHistory",
    "FlowProblem",
    "ForwardResult",
    "LKSSolver",
    "Periodic",
    "PressureOutlet",
    "SolverDivergence",
    "VelocityInlet",
    "Wall",
    "advance",
    "apply_boundaries",
    "apply_penalization",
    "run_forward",
    "run_periods",
]
