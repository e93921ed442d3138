"""Case configuration files.

A case is a TOML document with the tables ``analysis``, ``design``,
``motion``, ``solver``, ``boundaries``, ``objective``, ``constraint``,
``filter``, ``optimizer`` and ``output`` plus an optional array of fixed
``solids``.  Unknown keys are rejected with their line number, and
:func:`describe` prints the fully resolved case in the same format so that
``parse_config(describe(cfg)) == cfg``.

Lengths are in grid spacings of the analysis grid and times in time steps
(``dt = dx``) unless ``analysis.dx`` is changed.
"""

from __future__ import annotations

import dataclasses
import math
import re
from pathlib import Path
from typing import Any

try:
    import tomllib as tomli
except ImportError:  # Python < 3.11
    import tomli

FACES = ("xmin", "xmax", "ymin", "ymax", "zmin", "zmax")
BOUNDARY_TYPES = ("wall", "periodic", "pressure", "velocity")
REGION_TYPES = ("boundary", "box", "cylinder")
SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Invalid case file; ``line`` points at the offending entry when known."""

    def __init__(self, message: str, line: int | None = None, source: str | None = None):
        where = f"{source or '<config>'}" + (f":{line}" if line else "")
        super().__init__(f"{where}: {message}")
        self.line = line


@dataclasses.dataclass(frozen=True)
class AnalysisConfig:
    shape: tuple[int, ...]
    dx: float = 1.0


@dataclasses.dataclass(frozen=True)
class DesignConfig:
    shape: tuple[int, ...]
    init: float = 0.25
    reference: str = "none"  # named reference shape, see lkstopo.gallery


@dataclasses.dataclass(frozen=True)
class MotionConfig:
    pivot: tuple[float, ...]
    position: tuple[float, ...]  # where the pivot sits in the analysis frame
    rotation_period: float = 0.0  # 0 disables rotation
    rotation_axis: str = "z"
    translation: str = "fixed"  # fixed | sinusoidal
    amplitude: tuple[float, ...] = ()
    translation_period: float = 0.0


@dataclasses.dataclass(frozen=True)
class SolverConfig:
    n_steps: int
    A: float = 0.25
    kappa_max: float = 1000.0
    q: float = 0.1
    kernel: str = "standard"
    history_dtype: str = "float32"
    checkpoint_stride: int = 0
    restart: str = "cold"  # cold | warm


@dataclasses.dataclass(frozen=True)
class BoundaryConfig:
    face: str
    kind: str = "wall"
    rho: float = 1.0
    tangential: float = 0.0
    velocity: tuple[float, ...] = ()


@dataclasses.dataclass(frozen=True)
class SolidConfig:
    lower: tuple[float, ...]
    upper: tuple[float, ...]


@dataclasses.dataclass(frozen=True)
class ObjectiveConfig:
    kind: str
    region: str = "boundary"
    faces: tuple[str, ...] = ()
    lower: tuple[float, ...] = ()
    upper: tuple[float, ...] = ()
    center: tuple[float, ...] = ()
    radius: float = 0.0
    direction: tuple[float, ...] = ()
    window: tuple[float, float] = ()  # empty = whole run


@dataclasses.dataclass(frozen=True)
class ConstraintConfig:
    v_max: float = 0.25
    schedule: tuple[tuple[int, float], ...] = ()


@dataclasses.dataclass(frozen=True)
class FilterConfig:
    radius: float = 2.4
    eta: float = 0.5
    beta_start: float = 1.0
    beta_max: float = 1024.0
    beta_first: int = 80
    beta_interval: int = 80
    fluctuation_window: int = 5
    fluctuation_tol: float = 1e-4


@dataclasses.dataclass(frozen=True)
class OptimizerConfig:
    max_steps: int = 300
    tol: float = 1e-6
    move: float = 0.2
    seed: int = 0


@dataclasses.dataclass(frozen=True)
class OutputConfig:
    vtk_every: int = 0  # optimisation steps between design snapshots, 0 = final only
    snapshot_every: int = 0  # solver steps between flow snapshots in `simulate`


@dataclasses.dataclass(frozen=True)
class CaseConfig:
    name: str
    analysis: AnalysisConfig
    design: DesignConfig
    motion: MotionConfig
    solver: SolverConfig
    boundaries: tuple[BoundaryConfig, ...]
    objective: ObjectiveConfig
    constraint: ConstraintConfig = ConstraintConfig()
    filter: FilterConfig = FilterConfig()
    optimizer: OptimizerConfig = OptimizerConfig()
    output: OutputConfig = OutputConfig()
    solids: tuple[SolidConfig, ...] = ()
    version: int = SCHEMA_VERSION

    @property
    def d(self) -> int:
        return len(self.analysis.shape)

    def boundary(self, face: str) -> BoundaryConfig:
        for b in self.boundaries:
            if b.face == face:
                return b
        return BoundaryConfig(face)


# --- parsing -----------------------------------------------------------------

_SECTIONS = {
    "analysis": AnalysisConfig,
    "design": DesignConfig,
    "motion": MotionConfig,
    "solver": SolverConfig,
    "objective": ObjectiveConfig,
    "constraint": ConstraintConfig,
    "filter": FilterConfig,
    "optimizer": OptimizerConfig,
    "output": OutputConfig,
}
_REQUIRED = ("analysis", "design", "motion", "solver", "objective")


class _Locator:
    """Maps ``(table, key)`` to a source line for error messages."""

    _header = re.compile(r"^\s*\[\[?\s*([A-Za-z0-9_.]+)\s*\]\]?")
    _key = re.compile(r"^\s*([A-Za-z0-9_]+)\s*=")

    def __init__(self, text: str):
        self.lines: dict[tuple[str, str], int] = {}
        table = ""
        for i, line in enumerate(text.splitlines(), start=1):
            m = self._header.match(line)
            if m:
                table = m.group(1)
                self.lines.setdefault((table, ""), i)
                continue
            m = self._key.match(line)
            if m:
                self.lines.setdefault((table, m.group(1)), i)

    def line(self, table: str, key: str = "") -> int | None:
        return self.lines.get((table, key)) or self.lines.get((table, ""))


def _tuple(value, kind, n=None):
    if not isinstance(value, (list, tuple)):
        raise TypeError("expected an array")
    out = tuple(kind(v) for v in value)
    if n is not None and len(out) != n:
        raise TypeError(f"expected {n} entries, got {len(out)}")
    return out


def _coerce(field: dataclasses.Field, value: Any):
    hint = str(field.type)
    if hint.startswith("tuple[tuple"):
        pairs = tuple(_tuple(v, lambda x: x, 2) for v in _tuple(value, lambda x: x))
        return tuple((_int(a), _float(b)) for a, b in pairs)
    if hint.startswith("tuple[int"):
        return _tuple(value, _int)
    if hint.startswith("tuple[float"):
        return _tuple(value, _float)
    if hint.startswith("tuple[str"):
        return _tuple(value, str)
    if hint == "int":
        return _int(value)
    if hint == "float":
        return _float(value)
    if hint == "str":
        if not isinstance(value, str):
            raise TypeError("expected a string")
        return value
    raise TypeError(f"unsupported field type {hint}")


def _int(v):
    if isinstance(v, bool) or not isinstance(v, int):
        raise TypeError(f"expected an integer, got {v!r}")
    return v


def _float(v):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise TypeError(f"expected a number, got {v!r}")
    return float(v)


def _build(cls, table: dict, name: str, loc: _Locator, source):
    fields = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in table.items():
        if key not in fields:
            raise ConfigError(f"unknown key {name}.{key}", loc.line(name, key), source)
        try:
            kwargs[key] = _coerce(fields[key], value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{name}.{key}: {exc}", loc.line(name, key), source) from None
    try:
        return cls(**kwargs)
    except TypeError as exc:
        missing = [f for f in fields.values() if f.default is dataclasses.MISSING and f.name not in kwargs]
        what = ", ".join(f"{name}.{f.name}" for f in missing) or str(exc)
        raise ConfigError(f"missing required key(s): {what}", loc.line(name), source) from None


def parse_config(text: str, source: str | None = None) -> CaseConfig:
    """Parse and validate a case document."""
    try:
        raw = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"TOML syntax error: {exc}", int(m.group(1)) if m else None, source) from None
    loc = _Locator(text)
    allowed = set(_SECTIONS) | {"name", "version", "boundaries", "solids"}
    for key in raw:
        if key not in allowed:
            raise ConfigError(f"unknown table or key {key!r}", loc.line(key) or loc.line("", key), source)
    for key in _REQUIRED:
        if key not in raw:
            raise ConfigError(f"missing table [{key}]", None, source)
    version = raw.get("version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema version {version!r}", loc.line("", "version"), source)
    name = raw.get("name", "case")
    if not isinstance(name, str):
        raise ConfigError("name must be a string", loc.line("", "name"), source)
    parts = {key: _build(cls, raw[key], key, loc, source) for key, cls in _SECTIONS.items() if key in raw}

    boundaries = []
    for face, value in raw.get("boundaries", {}).items():
        if face not in FACES:
            raise ConfigError(f"unknown boundary face {face!r}", loc.line("boundaries", face), source)
        if isinstance(value, str):
            value = {"kind": value}
        if not isinstance(value, dict):
            raise ConfigError(f"boundaries.{face} must be a string or inline table", loc.line("boundaries", face), source)
        sub = _build(BoundaryConfig, {"face": face, **value}, "boundaries", loc, source)
        boundaries.append(sub)
    boundaries.sort(key=lambda b: FACES.index(b.face))

    solids = []
    for i, item in enumerate(raw.get("solids", [])):
        solids.append(_build(SolidConfig, item, "solids", loc, source))

    cfg = CaseConfig(name=name, boundaries=tuple(boundaries), solids=tuple(solids), **parts)
    _validate(cfg, loc, source)
    return cfg


def load_config(path: str | Path) -> CaseConfig:
    path = Path(path)
    return parse_config(path.read_text(), str(path))


def _validate(cfg: CaseConfig, loc: _Locator, source):
    def fail(msg, table, key=""):
        raise ConfigError(msg, loc.line(table, key), source)

    d = cfg.d
    if d not in (2, 3):
        fail("analysis.shape must have 2 or 3 entries", "analysis", "shape")
    if any(n < 4 for n in cfg.analysis.shape) or cfg.analysis.dx <= 0:
        fail("analysis grid needs at least 4 nodes per axis and dx > 0", "analysis", "shape")
    if len(cfg.design.shape) != d or any(n < 1 for n in cfg.design.shape):
        fail("design.shape must match the analysis dimension", "design", "shape")
    if not 0.0 <= cfg.design.init <= 1.0:
        fail("design.init must lie in [0, 1]", "design", "init")
    m = cfg.motion
    for key in ("pivot", "position"):
        if len(getattr(m, key)) != d:
            fail(f"motion.{key} must have {d} entries", "motion", key)
    if m.rotation_axis not in ("x", "y", "z") or (d == 2 and m.rotation_axis != "z"):
        fail("motion.rotation_axis must be x, y or z (z in 2D)", "motion", "rotation_axis")
    if m.translation not in ("fixed", "sinusoidal"):
        fail("motion.translation must be 'fixed' or 'sinusoidal'", "motion", "translation")
    if m.translation == "sinusoidal" and (len(m.amplitude) != d or m.translation_period <= 0):
        fail("sinusoidal translation needs amplitude (d entries) and translation_period > 0", "motion", "translation")
    s = cfg.solver
    if s.n_steps < 1:
        fail("solver.n_steps must be positive", "solver", "n_steps")
    if 1.0 / 6.0 - 2.0 * s.A / 9.0 <= 0:
        fail("solver.A gives non-positive viscosity", "solver", "A")
    if s.kappa_max <= 0 or s.q <= 0:
        fail("solver.kappa_max and solver.q must be positive", "solver", "kappa_max")
    if s.kernel not in ("standard", "printed"):
        fail("solver.kernel must be 'standard' or 'printed'", "solver", "kernel")
    if s.history_dtype not in ("float32", "float64"):
        fail("solver.history_dtype must be float32 or float64", "solver", "history_dtype")
    if s.restart not in ("cold", "warm") or s.checkpoint_stride < 0:
        fail("solver.restart must be cold or warm; checkpoint_stride >= 0", "solver", "restart")
    for b in cfg.boundaries:
        if b.kind not in BOUNDARY_TYPES:
            fail(f"boundary type must be one of {BOUNDARY_TYPES}", "boundaries", b.face)
        if FACES.index(b.face) // 2 >= d:
            fail(f"face {b.face} does not exist in {d}D", "boundaries", b.face)
        if b.kind == "velocity" and len(b.velocity) != d:
            fail("velocity boundary needs a d-component velocity", "boundaries", b.face)
    for axis in range(d):
        kinds = {cfg.boundary(f).kind == "periodic" for f in FACES[2 * axis : 2 * axis + 2]}
        if len(kinds) > 1:
            fail(f"periodic boundaries must pair on axis {axis}", "boundaries")
    for sol in cfg.solids:
        if len(sol.lower) != d or len(sol.upper) != d:
            fail("solid boxes need d-entry lower/upper corners", "solids")
    o = cfg.objective
    if o.kind not in ("pressure", "flow"):
        fail("objective.kind must be 'pressure' or 'flow'", "objective", "kind")
    if o.region not in REGION_TYPES:
        fail(f"objective.region must be one of {REGION_TYPES}", "objective", "region")
    if o.region == "box" and (len(o.lower) != d or len(o.upper) != d):
        fail("box region needs d-entry lower/upper", "objective", "region")
    if o.region == "cylinder" and (len(o.center) != d or o.radius <= 0 or (d == 3 and (len(o.lower) != 1 or len(o.upper) != 1))):
        fail("cylinder region needs center, radius and (3D) one-entry lower/upper heights", "objective", "region")
    if o.kind == "flow":
        if len(o.direction) != d or not math.isclose(math.hypot(*o.direction), 1.0, abs_tol=1e-9):
            fail("flow objective needs a unit direction with d entries", "objective", "direction")
    if o.window and (len(o.window) != 2 or not o.window[0] < o.window[1]):
        fail("objective.window must be [start, stop] with start < stop", "objective", "window")
    c = cfg.constraint
    vals = [c.v_max] + [float(v) for _, v in c.schedule]
    if any(not 0 < v <= 1 for v in vals) or vals != sorted(vals, reverse=True):
        fail("volume limits must lie in (0, 1] and never increase", "constraint", "v_max")
    f = cfg.filter
    if f.radius <= 0 or not 0 < f.eta < 1 or f.beta_start <= 0 or f.beta_max < f.beta_start:
        fail("filter needs radius > 0, 0 < eta < 1 and 0 < beta_start <= beta_max", "filter")
    if f.beta_first < 1 or f.beta_interval < 1 or f.fluctuation_window < 2:
        fail("filter continuation intervals must be positive", "filter")
    if cfg.optimizer.max_steps < 1 or cfg.optimizer.tol <= 0 or not 0 < cfg.optimizer.move <= 1:
        fail("optimizer needs max_steps >= 1, tol > 0 and 0 < move <= 1", "optimizer")


# --- describe ----------------------------------------------------------------


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isinf(value) or math.isnan(value):
            raise ValueError("non-finite values cannot be written")
        return repr(value)
    if isinstance(value, str):
        return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(value, tuple):
        return "[" + ", ".join(_fmt(v) for v in value) + "]"
    raise TypeError(f"cannot format {value!r}")


def _table(obj, skip=()) -> list[str]:
    return [f"{f.name} = {_fmt(getattr(obj, f.name))}" for f in dataclasses.fields(obj) if f.name not in skip]


def describe(cfg: CaseConfig) -> str:
    """Fully resolved case document (every default written out)."""
    out = [f"version = {cfg.version}", f"name = {_fmt(cfg.name)}", ""]
    for key in _SECTIONS:
        out.append(f"[{key}]")
        out.extend(_table(getattr(cfg, key)))
        out.append("")
    out.append("[boundaries]")
    for b in cfg.boundaries:
        items = ", ".join(_table(b, skip=("face",)))
        out.append(f"{b.face} = {{ {items} }}")
    out.append("")
    for sol in cfg.solids:
        out.append("[[solids]]")
        out.extend(_table(sol))
        out.append("")
    return "\n".join(out)
