import numpy as np
import pytest

from lkstopo.lattice import UniformGrid
from lkstopo.vtk import format_vtk, read_vtk, write_vtk

GOLDEN_2X2 = """\
# vtk DataFile Version 3.0
lkstopo
ASCII
DATASET STRUCTURED_POINTS
DIMENSIONS 2 2 1
ORIGIN 0 0 0
SPACING 1 1 1
POINT_DATA 4
SCALARS gamma double 1
LOOKUP_TABLE default
0
0
0
0
"""


def test_golden_zero_field():
    assert format_vtk({"gamma": np.zeros((2, 2))}, UniformGrid((2, 2))) == GOLDEN_2X2


def test_x_varies_fastest_and_vectors_padded():
    g = UniformGrid((3, 2), dx=0.5, origin=(1.0, 2.0))
    s = np.arange(6.0).reshape(3, 2)
    u = np.stack([s, -s])
    text = format_vtk({"s": s, "u": u}, g)
    lines = text.splitlines()
    assert "DIMENSIONS 3 2 1" in lines and "SPACING 0.5 0.5 0.5" in lines and "ORIGIN 1 2 0" in lines
    i = lines.index("LOOKUP_TABLE default")
    assert lines[i + 1 : i + 7] == ["0", "2", "4", "1", "3", "5"]
    j = lines.index("VECTORS u double")
    assert lines[j + 2] == "2 -2 0"


def test_round_trip_3d(tmp_path):
    rng = np.random.default_rng(0)
    g = UniformGrid((4, 3, 2), origin=(0.0, 1.0, 2.0))
    fields = {"rho": rng.uniform(0.9, 1.1, g.shape), "u": rng.normal(size=(3,) + g.shape)}
    path = write_vtk(tmp_path / "f.vtk", fields, g)
    g2, back = read_vtk(path)
    assert g2 == g
    for k in fields:
        np.testing.assert_allclose(back[k], fields[k], rtol=1e-8)


def test_negative_zero_is_printed_as_zero():
    text = format_vtk({"a": np.array([[-0.0, 1e-300]])}, UniformGrid((1, 2)))
    assert "\n-0\n" not in text


def test_bad_fields_rejected():
    g = UniformGrid((2, 2))
    with pytest.raises(ValueError):
        format_vtk({"a": np.zeros((3, 2))}, g)
    with pytest.raises(ValueError):
        format_vtk({"bad name": np.zeros((2, 2))}, g)


def test_write_to_missing_directory_fails(tmp_path):
    with pytest.raises(OSError, match="cannot write"):
        write_vtk(tmp_path / "nope" / "f.vtk", {"a": np.zeros((2, 2))}, UniformGrid((2, 2)))
