"""Assemble solver objects from a :class:`CaseConfig` and locate shipped cases."""

from __future__ import annotations

import dataclasses
from importlib import resources
from pathlib import Path

import numpy as np

from .config import CaseConfig, load_config
from .design import BrinkmanParams, DesignField
from .forward import BoundarySpec, FlowProblem, Periodic, PressureOutlet, VelocityInlet, Wall
from .lattice import UniformGrid
from .motion import ConstantRotation, FixedTranslation, MotionSpec, NoRotation, SinusoidalTranslation
from .objectives import ConstraintSpec, Objective, ObjectiveSpec, boundary_nodes

CASE_SUFFIX = ".cfg"


def plate_reference(shape: tuple[int, ...], fraction: float = 0.25) -> np.ndarray:
    """Mirror-symmetric slab across the first axis filling ``fraction`` of the
    second axis; a shape without islands that moves fluid symmetrically."""
    gamma = np.zeros(shape)
    n = shape[1]
    width = max(1, int(round(fraction * n)))
    lo = (n - width) // 2
    sl = [slice(None)] * len(shape)
    sl[1] = slice(lo, lo + width)
    gamma[tuple(sl)] = 1.0
    return gamma


def wedge_reference(shape: tuple[int, ...], fraction: float = 0.25) -> np.ndarray:
    """Island-free ramp: along the first axis the solid thickness falls
    linearly from ``2 * fraction`` of the second axis to zero, centred on the
    second axis.  Oscillated along the second axis it pumps towards +x."""
    nx, n = shape[0], shape[1]
    top = 2.0 * fraction * n
    lo = (n - top) / 2.0
    h = top * (nx - 1 - np.arange(nx)) / max(nx - 1, 1)
    j = np.arange(n)
    mask = (j[None, :] >= lo) & (j[None, :] < lo + h[:, None])
    mask = mask.reshape((nx, n) + (1,) * (len(shape) - 2))
    return np.broadcast_to(mask, shape).astype(float)


REFERENCE_SHAPES = {"plate": plate_reference, "wedge": wedge_reference}


@dataclasses.dataclass
class Case:
    config: CaseConfig
    problem: FlowProblem
    objective: Objective
    constraint: ConstraintSpec

    @property
    def warm_restart(self) -> bool:
        return self.config.solver.restart == "warm"

    @property
    def checkpoint_stride(self) -> int | None:
        return self.config.solver.checkpoint_stride or None

    def new_design(self) -> DesignField:
        f = self.config.filter
        return DesignField(self.problem.design_grid, self.config.design.init, f.radius, f.beta_start, f.eta)

    def reference_design(self) -> np.ndarray:
        name = self.config.design.reference
        if name not in REFERENCE_SHAPES:
            raise ValueError(f"case {self.config.name!r} has no reference shape")
        return REFERENCE_SHAPES[name](self.problem.design_grid.shape)


def _boundaries(cfg: CaseConfig) -> BoundarySpec:
    faces = {}
    for b in cfg.boundaries:
        if b.kind == "wall":
            faces[b.face] = Wall()
        elif b.kind == "periodic":
            faces[b.face] = Periodic()
        elif b.kind == "pressure":
            faces[b.face] = PressureOutlet(b.rho, b.tangential)
        else:
            faces[b.face] = VelocityInlet(tuple(b.velocity))
    return BoundarySpec(faces)


def _motion(cfg: CaseConfig) -> MotionSpec:
    m = cfg.motion
    rotation = ConstantRotation(m.rotation_period) if m.rotation_period else NoRotation()
    if m.translation == "sinusoidal":
        translation = SinusoidalTranslation(m.position, m.amplitude, m.translation_period)
    else:
        translation = FixedTranslation(m.position)
    return MotionSpec(pivot=m.pivot, rotation=rotation, translation=translation, axis="xyz".index(m.rotation_axis))


def _box(grid: UniformGrid, lower, upper) -> np.ndarray:
    x = grid.coordinates()
    eps = 1e-9 * grid.dx
    mask = np.ones(grid.shape, dtype=bool)
    for a in range(grid.d):
        mask &= (x[a] >= lower[a] - eps) & (x[a] <= upper[a] + eps)
    return mask


def objective_region(cfg: CaseConfig, grid: UniformGrid) -> np.ndarray:
    o = cfg.objective
    if o.region == "boundary":
        return boundary_nodes(grid.shape, o.faces or None)
    if o.region == "box":
        return _box(grid, o.lower, o.upper)
    x = grid.coordinates()
    r2 = sum((x[a] - o.center[a]) ** 2 for a in range(2))
    mask = r2 <= o.radius**2 + 1e-9
    if grid.d == 3:
        mask &= (x[2] >= o.lower[0] - 1e-9) & (x[2] <= o.upper[0] + 1e-9)
    return mask


def solid_mask(cfg: CaseConfig, grid: UniformGrid) -> np.ndarray:
    mask = np.zeros(grid.shape, dtype=bool)
    for s in cfg.solids:
        mask |= _box(grid, s.lower, s.upper)
    return mask


def build_case(cfg: CaseConfig) -> Case:
    dx = cfg.analysis.dx
    grid = UniformGrid(cfg.analysis.shape, dx)
    design_grid = UniformGrid(cfg.design.shape, dx)
    s = cfg.solver
    brink = BrinkmanParams(s.kappa_max, s.q)
    solids = solid_mask(cfg, grid)
    problem = FlowProblem(
        grid=grid,
        design_grid=design_grid,
        motion=_motion(cfg),
        n_steps=s.n_steps,
        boundaries=_boundaries(cfg),
        A=s.A,
        brinkman=brink,
        kappa_fixed=np.where(solids, s.kappa_max, 0.0) if solids.any() else None,
        kernel_variant=s.kernel,
        history_dtype=s.history_dtype,
    )
    o = cfg.objective
    spec = ObjectiveSpec(
        kind=o.kind,
        region=objective_region(cfg, grid),
        direction=o.direction or None,
        window=tuple(o.window) if o.window else None,
    )
    objective = Objective(spec, s.n_steps, problem.dt)
    constraint = ConstraintSpec(cfg.constraint.v_max, cfg.constraint.schedule)
    return Case(cfg, problem, objective, constraint)


def shipped_cases() -> list[str]:
    root = resources.files("lkstopo") / "cases"
    return sorted(p.name[: -len(CASE_SUFFIX)] for p in root.iterdir() if p.name.endswith(CASE_SUFFIX))


def case_path(name_or_path: str | Path) -> Path:
    """Resolve a file path, or the name of a shipped case (``rotor2d_small``)."""
    p = Path(name_or_path)
    if p.is_file():
        return p
    name = p.name[: -len(CASE_SUFFIX)] if p.name.endswith(CASE_SUFFIX) else p.name
    shipped = resources.files("lkstopo") / "cases" / (name + CASE_SUFFIX)
    if shipped.is_file():
        return Path(str(shipped))
    raise FileNotFoundError(f"no case file or shipped case named {name_or_path!s}")


def load_case(name_or_path: str | Path) -> CaseConfig:
    return load_config(case_path(name_or_path))
