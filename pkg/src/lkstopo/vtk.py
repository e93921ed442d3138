"""Legacy ASCII VTK (STRUCTURED_POINTS) output and a matching reader."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .lattice import UniformGrid

HEADER = "# vtk DataFile Version 3.0"
_FMT = "{:.9g}"


def _num(v: float) -> str:
    s = _FMT.format(float(v))
    return "0" if s == "-0" else s


def format_vtk(fields: dict[str, np.ndarray], grid: UniformGrid, title: str = "lkstopo") -> str:
    """Render fields on ``grid`` as a legacy VTK document.

    A field with the grid's shape is written as SCALARS, one with shape
    ``(d, *grid.shape)`` as VECTORS (zero z component in 2D).  Values are
    listed with x varying fastest.
    """
    d = grid.d
    dims = list(grid.shape) + [1] * (3 - d)
    origin = list(grid.origin) + [0.0] * (3 - d)
    lines = [
        HEADER,
        title.replace("\n", " ")[:255],
        "ASCII",
        "DATASET STRUCTURED_POINTS",
        "DIMENSIONS " + " ".join(str(n) for n in dims),
        "ORIGIN " + " ".join(_num(o) for o in origin),
        "SPACING " + " ".join(_num(grid.dx) for _ in range(3)),
        f"POINT_DATA {grid.size}",
    ]
    for name, value in fields.items():
        if any(ch.isspace() for ch in name) or not name:
            raise ValueError(f"invalid VTK field name {name!r}")
        value = np.asarray(value, dtype=float)
        if value.shape == grid.shape:
            lines.append(f"SCALARS {name} double 1")
            lines.append("LOOKUP_TABLE default")
            lines.extend(_num(v) for v in value.ravel(order="F"))
        elif value.shape == (d,) + grid.shape:
            comps = [value[a].ravel(order="F") for a in range(d)]
            comps += [np.zeros(grid.size)] * (3 - d)
            lines.append(f"VECTORS {name} double")
            lines.extend(" ".join(_num(c[k]) for c in comps) for k in range(grid.size))
        else:
            raise ValueError(f"field {name!r} with shape {value.shape} does not fit grid {grid.shape}")
    return "\n".join(lines) + "\n"


def write_vtk(path: str | Path, fields: dict[str, np.ndarray], grid: UniformGrid, title: str = "lkstopo") -> Path:
    path = Path(path)
    text = format_vtk(fields, grid, title)
    try:
        path.write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write VTK file {path}: {exc}") from exc
    return path


def read_vtk(path: str | Path) -> tuple[UniformGrid, dict[str, np.ndarray]]:
    """Read a file produced by :func:`write_vtk` (or any legacy ASCII
    STRUCTURED_POINTS file with SCALARS/VECTORS point data)."""
    tokens = Path(path).read_text().split("\n")
    if not tokens[0].startswith("# vtk DataFile"):
        raise ValueError(f"{path}: not a legacy VTK file")
    if tokens[2].strip() != "ASCII":
        raise ValueError(f"{path}: only ASCII files are supported")
    words = " ".join(tokens[3:]).split()
    pos = 0

    def take(n=1):
        nonlocal pos
        out = words[pos : pos + n]
        pos += n
        return out

    dims = origin = spacing = None
    npts = None
    fields: dict[str, np.ndarray] = {}
    while pos < len(words):
        key = take()[0].upper()
        if key == "DATASET":
            kind = take()[0].upper()
            if kind != "STRUCTURED_POINTS":
                raise ValueError(f"{path}: unsupported dataset {kind}")
        elif key == "DIMENSIONS":
            dims = [int(v) for v in take(3)]
        elif key in ("ORIGIN",):
            origin = [float(v) for v in take(3)]
        elif key in ("SPACING", "ASPECT_RATIO"):
            spacing = [float(v) for v in take(3)]
        elif key == "POINT_DATA":
            npts = int(take()[0])
        elif key == "SCALARS":
            name, _dtype = take(2)
            ncomp = 1
            if pos < len(words) and words[pos].upper() != "LOOKUP_TABLE":
                ncomp = int(take()[0])
            if words[pos].upper() == "LOOKUP_TABLE":
                take(2)
            fields[name] = np.array(take(npts * ncomp), dtype=float)
        elif key == "VECTORS":
            name, _dtype = take(2)
            fields[name] = np.array(take(npts * 3), dtype=float).reshape(npts, 3)
        else:
            raise ValueError(f"{path}: unexpected token {key}")
    if dims is None or npts is None:
        raise ValueError(f"{path}: missing DIMENSIONS or POINT_DATA")
    shape = tuple(dims[:2]) if dims[2] == 1 else tuple(dims)
    d = len(shape)
    grid = UniformGrid(shape, spacing[0] if spacing else 1.0, tuple((origin or [0.0] * 3)[:d]))
    out = {}
    for name, v in fields.items():
        if v.ndim == 1:
            out[name] = v.reshape(shape, order="F")
        else:
            out[name] = np.stack([v[:, a].reshape(shape, order="F") for a in range(d)])
    return grid, out
