import numpy as np
import pytest
from hypothesis import given, strategies as st

from lkstopo.lattice import D2Q9, D3Q15
from lkstopo.objectives import (
    ConstraintSpec,
    Objective,
    ObjectiveSpec,
    boundary_nodes,
    eval_G,
    eval_J1,
    eval_J2,
    sources_to_moments,
    volume_sensitivity,
    window_steps,
)


def test_boundary_nodes_count():
    assert boundary_nodes((5, 4)).sum() == 5 * 4 - 3 * 2
    m = boundary_nodes((5, 4, 3), ("zmax",))
    assert m.sum() == 20 and m[..., -1].all()


def test_window_steps():
    np.testing.assert_array_equal(window_steps(None, 3), [0, 1, 2, 3])
    np.testing.assert_array_equal(window_steps((2.0, 4.0), 10), [2, 3, 4])
    np.testing.assert_array_equal(window_steps((1.0, 3.0), 10, dt=0.5), [2, 3, 4, 5, 6])
    with pytest.raises(ValueError):
        window_steps((3.0, 3.0), 10)


def test_step_accumulation_matches_batch_formulas():
    """Summing per-step contributions equals the whole-history J1 and J2."""
    rng = np.random.default_rng(0)
    shape, steps = (6, 5), 8
    rho = 1 + 0.01 * rng.normal(size=(steps + 1,) + shape)
    u = 0.01 * rng.normal(size=(steps + 1, 2) + shape)
    bnd = boundary_nodes(shape)
    o1 = Objective(ObjectiveSpec("pressure", bnd), steps)
    assert sum(o1.contribution(n, rho[n], u[n]) for n in range(steps + 1)) == pytest.approx(eval_J1(rho, bnd))
    region = np.zeros(shape, bool)
    region[2:4, 1:3] = True
    o2 = Objective(ObjectiveSpec("flow", region, direction=(0.6, -0.8), window=(3.0, 6.0)), steps)
    total = sum(o2.contribution(n, rho[n], u[n]) for n in range(steps + 1))
    assert total == pytest.approx(eval_J2(u[3:7], region, (0.6, -0.8)))


@pytest.mark.parametrize("model", [D2Q9, D3Q15])
def test_adjoint_sources_are_population_derivatives(model):
    """dJ/df_i from ``adjoint_sources`` equals the chain rule through the moments."""
    d = model.d
    shape = (4,) * d
    region = np.zeros(shape, bool)
    region[(1,) * d] = True
    direction = np.zeros(d)
    direction[0] = 1.0
    for spec in (ObjectiveSpec("pressure", region), ObjectiveSpec("flow", region, direction=tuple(direction))):
        obj = Objective(spec, 4)
        src = obj.adjoint_sources(2, model, shape)
        drho, du = obj.state_derivative(2, shape)
        drho = np.zeros(shape) if drho is None else drho
        du = np.zeros((d,) + shape) if du is None else du
        expect = drho[None] + np.tensordot(model.c.astype(float), du, axes=(1, 0))
        np.testing.assert_allclose(src, expect, atol=1e-15)
        a, b = sources_to_moments(src, model)
        np.testing.assert_allclose(a, drho, atol=1e-15)
        np.testing.assert_allclose(b, du, atol=1e-15)
        assert not obj.adjoint_sources(9, model, shape).any()


def test_objective_spec_validation():
    region = np.ones((3, 3), bool)
    with pytest.raises(ValueError):
        ObjectiveSpec("drag", region)
    with pytest.raises(ValueError):
        ObjectiveSpec("flow", region)
    with pytest.raises(ValueError):
        ObjectiveSpec("flow", region, direction=(1.0, 1.0))
    with pytest.raises(ValueError):
        ObjectiveSpec("pressure", np.zeros((3, 3), bool))


@given(g=st.floats(0.0, 1.0), v=st.floats(0.05, 1.0))
def test_volume_constraint(g, v):
    gamma = np.full((4, 3), g)
    assert eval_G(gamma, v) == pytest.approx(g / v - 1.0)
    assert volume_sensitivity(gamma, v).sum() == pytest.approx(1.0 / v)


def test_constraint_schedule():
    c = ConstraintSpec(1.0, ((80, 0.4),))
    assert c.at(0) == 1.0 and c.at(79) == 1.0 and c.at(80) == 0.4
    with pytest.raises(ValueError):
        ConstraintSpec(0.3, ((5, 0.5),))
    with pytest.raises(ValueError):
        ConstraintSpec(0.0)
