import numpy as np
import pytest

from lkstopo.adjoint import run_adjoint
from lkstopo.forward import BoundarySpec, PressureOutlet, VelocityInlet, run_forward
from lkstopo.objectives import Objective, ObjectiveSpec, boundary_nodes

from conftest import micro_problem

BOUNDARIES = {
    "walls": BoundarySpec.walls(),
    "outlet": BoundarySpec({"ymax": PressureOutlet(1.0), "xmin": VelocityInlet((0.01, 0.0))}),
    "periodic": BoundarySpec.periodic(2),
}


def objectives(shape, n_steps):
    region = np.zeros(shape, bool)
    region[4:7, 7:10] = True
    return {
        "J1": Objective(ObjectiveSpec("pressure", boundary_nodes(shape)), n_steps),
        "J2": Objective(ObjectiveSpec("flow", region, direction=(0.6, 0.8), window=(3.0, 10.0)), n_steps),
    }


def directional_fd(prob, gamma, obj, v, h=1e-5):
    jp = run_forward(prob, gamma + h * v, obj, record=False).objective
    jm = run_forward(prob, gamma - h * v, obj, record=False).objective
    return (jp - jm) / (2 * h)


@pytest.mark.parametrize("bname", list(BOUNDARIES))
@pytest.mark.parametrize("oname", ["J1", "J2"])
def test_adjoint_matches_central_differences(bname, oname):
    prob = micro_problem(BOUNDARIES[bname])
    obj = objectives(prob.grid.shape, prob.n_steps)[oname]
    rng = np.random.default_rng(7)
    gamma = rng.uniform(0.2, 0.8, prob.design_grid.shape)
    adj = run_adjoint(prob, gamma, run_forward(prob, gamma, obj), obj)
    for _ in range(3):
        v = rng.normal(size=gamma.shape)
        fd = directional_fd(prob, gamma, obj, v)
        assert np.vdot(adj.sensitivity, v) == pytest.approx(fd, rel=1e-6, abs=1e-13)


def test_checkpointed_adjoint_equals_dense():
    prob = micro_problem()
    obj = objectives(prob.grid.shape, prob.n_steps)["J2"]
    gamma = np.random.default_rng(3).uniform(0.2, 0.8, prob.design_grid.shape)
    dense = run_adjoint(prob, gamma, run_forward(prob, gamma, obj), obj)
    ck = run_adjoint(prob, gamma, run_forward(prob, gamma, obj, checkpoint_stride=4), obj)
    np.testing.assert_array_equal(dense.sensitivity, ck.sensitivity)


def test_zero_objective_gives_zero_sensitivity():
    """A window that excludes every step carries no adjoint source."""
    prob = micro_problem()
    region = np.zeros(prob.grid.shape, bool)
    region[5, 5] = True
    obj = Objective(ObjectiveSpec("flow", region, direction=(1.0, 0.0), window=(50.0, 60.0)), prob.n_steps)
    gamma = np.full(prob.design_grid.shape, 0.5)
    adj = run_adjoint(prob, gamma, run_forward(prob, gamma, obj), obj)
    assert not adj.sensitivity.any() and not adj.carry.any()


def test_sensitivity_is_linear_in_objective_weights():
    """J1 and J2 adjoints add up like the objectives do."""
    prob = micro_problem()
    objs = objectives(prob.grid.shape, prob.n_steps)
    gamma = np.random.default_rng(4).uniform(0.2, 0.8, prob.design_grid.shape)
    fw = run_forward(prob, gamma, objs["J1"])
    s1 = run_adjoint(prob, gamma, fw, objs["J1"]).sensitivity
    s2 = run_adjoint(prob, gamma, fw, objs["J2"]).sensitivity

    class Sum(Objective):
        def state_derivative(self, n, shape):
            r1, _ = objs["J1"].state_derivative(n, shape)
            _, u2 = objs["J2"].state_derivative(n, shape)
            return r1, None if u2 is None else 2.0 * u2

    both = Sum(objs["J1"].spec, prob.n_steps)
    s = run_adjoint(prob, gamma, fw, both).sensitivity
    np.testing.assert_allclose(s, s1 + 2.0 * s2, rtol=1e-12, atol=1e-15)


def test_adjoint_from_nonrest_initial_state():
    """Starting from a developed flow (warm restart) the adjoint still matches FD."""
    prob = micro_problem(BOUNDARIES["outlet"])
    obj = objectives(prob.grid.shape, prob.n_steps)["J1"]
    rng = np.random.default_rng(5)
    gamma = rng.uniform(0.2, 0.8, prob.design_grid.shape)
    first = run_forward(prob, gamma, obj, record=False).final
    adj = run_adjoint(prob, gamma, run_forward(prob, gamma, obj, initial=first), obj)
    assert adj.carry.shape == (9, prob.grid.size) and np.isfinite(adj.carry).all()
    v = rng.normal(size=gamma.shape)
    h = 1e-5
    jp = run_forward(prob, gamma + h * v, obj, initial=first, record=False).objective
    jm = run_forward(prob, gamma - h * v, obj, initial=first, record=False).objective
    assert np.vdot(adj.sensitivity, v) == pytest.approx((jp - jm) / (2 * h), rel=1e-6)
