import dataclasses

import numpy as np
import pytest

from lkstopo.config import ConfigError, describe, load_config, parse_config
from lkstopo.gallery import build_case, case_path, load_case, plate_reference, shipped_cases, wedge_reference

MINIMAL = """\
name = "mini"

[analysis]
shape = [20, 20]

[design]
shape = [8, 8]

[motion]
pivot = [3.5, 3.5]
position = [10.0, 10.0]
rotation_period = 200.0

[solver]
n_steps = 20

[objective]
kind = "pressure"
region = "boundary"
"""


def test_shipped_cases_listed():
    names = shipped_cases()
    for name in ("rotor2d", "rotor2d_small", "pump2d", "pump2d_small", "rotor3d", "rotor3d_small"):
        assert name in names


@pytest.mark.parametrize("name", ["rotor2d", "rotor2d_small", "pump2d", "pump2d_small", "rotor3d", "rotor3d_small"])
def test_describe_round_trip(name):
    cfg = load_case(name)
    again = parse_config(describe(cfg))
    assert again == cfg
    assert describe(again) == describe(cfg)


def test_defaults_are_filled_in():
    cfg = parse_config(MINIMAL)
    assert cfg.version == 1 and cfg.solver.A == 0.25 and cfg.solver.kappa_max == 1000.0
    assert cfg.filter.radius == 2.4 and cfg.filter.beta_max == 1024
    assert cfg.constraint.v_max == 0.25 and cfg.optimizer.tol == 1e-6
    assert "version = 1" in describe(cfg)


def test_unknown_key_reports_line():
    text = MINIMAL.replace("n_steps = 20", "n_steps = 20\nsteps_per_frame = 3")
    with pytest.raises(ConfigError) as info:
        parse_config(text, "mini.cfg")
    assert info.value.line == text.splitlines().index("steps_per_frame = 3") + 1
    assert "mini.cfg:" in str(info.value) and "steps_per_frame" in str(info.value)


def test_unknown_table_rejected():
    with pytest.raises(ConfigError, match="extras"):
        parse_config(MINIMAL + "\n[extras]\na = 1\n")


def test_missing_required_table():
    text = MINIMAL.split("[objective]")[0]
    with pytest.raises(ConfigError, match="objective"):
        parse_config(text)


def test_missing_required_field():
    with pytest.raises(ConfigError, match="n_steps"):
        parse_config(MINIMAL.replace("n_steps = 20", ""))


@pytest.mark.parametrize(
    "old,new,match",
    [
        ('shape = [8, 8]', 'shape = [8, 8, 8]', "design.shape"),
        ('kind = "pressure"', 'kind = "lift"', "kind"),
        ("n_steps = 20", "n_steps = 20\nA = 0.8", "A"),
        ("n_steps = 20", "n_steps = 0", "n_steps"),
        ('name = "mini"', 'name = "mini"\nversion = 2', "version"),
        ("[analysis]", "[analysis\n", "syntax"),
    ],
)
def test_invalid_values(old, new, match):
    with pytest.raises(ConfigError, match=match):
        parse_config(MINIMAL.replace(old, new))


def test_load_config_from_path(tmp_path):
    p = tmp_path / "mini.cfg"
    p.write_text(MINIMAL)
    assert load_config(p).name == "mini"
    assert case_path(str(p)) == p
    with pytest.raises(FileNotFoundError):
        case_path("does_not_exist")


def test_build_case_small_rotor():
    case = build_case(load_case("rotor2d_small"))
    prob = case.problem
    assert prob.grid.shape == (75, 75) and prob.design_grid.shape == (50, 50)
    assert prob.n_steps == 1500 and not case.warm_restart
    assert case.objective.kind == "pressure" and case.objective.n_region == 4 * 74
    d = case.new_design()
    assert d.beta == 1.0
    np.testing.assert_allclose(d.raw, 0.25)


def test_build_case_small_pump():
    case = build_case(load_case("pump2d_small"))
    assert case.warm_restart and case.objective.kind == "flow"
    assert case.problem.kappa_fixed is not None and case.problem.kappa_fixed.max() == pytest.approx(1000.0)
    ref = case.reference_design()
    assert ref.shape == case.problem.design_grid.shape
    assert 0.2 < ref.mean() < 0.3


def test_build_case_small_3d_rotor():
    case = build_case(load_case("rotor3d_small"))
    assert case.problem.grid.d == 3 and case.checkpoint_stride == 50
    assert case.constraint.at(0) == 1.0 and case.constraint.at(20) == 0.4


def test_plate_reference():
    g = plate_reference((6, 8))
    assert g.sum() == 12 and np.all(g[:, 3:5] == 1.0)
    assert np.array_equal(g, g[:, ::-1])


def test_wedge_reference():
    g = wedge_reference((5, 8))
    # thickness 4, 3, 2, 1, 0 starting at row 2
    assert g.sum(axis=1).tolist() == [4, 3, 2, 1, 0]
    assert np.all(g[0, 2:6] == 1.0) and g[0, :2].sum() == 0 and g[0, 6:].sum() == 0
    assert wedge_reference((5, 8, 3)).shape == (5, 8, 3)


def test_pump_reference_is_wedge():
    case = build_case(load_case("pump2d_small"))
    g = case.reference_design()
    assert g.shape == case.problem.design_grid.shape
    assert abs(g.mean() - 0.25) < 0.01


def test_rotor_without_reference():
    case = build_case(load_case("rotor2d_small"))
    with pytest.raises(ValueError):
        case.reference_design()


def test_config_is_frozen():
    cfg = parse_config(MINIMAL)
    with pytest.raises(dataclasses.FrozenInstanceError):
        cfg.name = "other"
