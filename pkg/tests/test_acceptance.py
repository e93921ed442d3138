"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The long scenarios (criteria 1, 2, 5, 6) take from minutes to most of an
hour on one core; all of them run by default.
"""

import itertools
import math
import time
from fractions import Fraction

import numpy as np
import pytest

from lkstopo.adjoint import run_adjoint
from lkstopo.forward import BoundarySpec, PressureOutlet, run_forward, run_periods
from lkstopo.gallery import build_case, load_case
from lkstopo.lattice import D2Q9, D3Q15, UniformGrid
from lkstopo.mma import MmaState, mma_update
from lkstopo.motion import ConstantRotation, MotionSpec, SinusoidalTranslation
from lkstopo.objectives import Objective, ObjectiveSpec, boundary_nodes
from lkstopo.optimize import FEASIBILITY_TOL, LoopControl, monotone_fraction, optimization_loop
from lkstopo.overlap import OverlapStencil
from lkstopo.verification import sensitivity_fda, taylor_couette

from conftest import micro_problem
from test_forward import periodic_problem, shear_wave_rate

pytestmark = pytest.mark.slow


def test_criterion_1_taylor_couette(acceptance):
    t0 = time.perf_counter()
    full = taylor_couette(1.0)
    runtime = time.perf_counter() - t0
    half = taylor_couette(0.5)
    e_full, e_half = full.norms["max_rel"], half.norms["max_rel"]
    checks = {
        "max_rel<0.05": e_full < 0.05,
        "refines": e_full < e_half,
        "steady": bool(full.info["steady_ok"]),
        "time<300s": runtime < 300.0,
    }
    ok = all(checks.values())
    detail = f"max_rel full={e_full:.4f} half={e_half:.4f} runtime={runtime:.0f}s " + " ".join(f"{k}={v}" for k, v in checks.items())
    assert acceptance(1, "Taylor-Couette profile", ok, detail), detail


def test_criterion_2_adjoint_vs_fda(acceptance):
    t0 = time.perf_counter()
    rep = sensitivity_fda(0.5)
    runtime = time.perf_counter() - t0
    ok = rep.passed and runtime < 1800.0
    detail = (
        f"cosine={rep.norms['cosine']:.12f} l2_rel={rep.norms['l2_rel']:.2e} "
        f"richardson_change={rep.info['richardson_change']:.2e} probes={rep.info['probes']} runtime={runtime:.0f}s"
    )
    assert acceptance(2, "adjoint vs finite differences (quarter scale)", ok, detail), detail


def test_criterion_3_micro_exactness(acceptance):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = 0.0
    count = 0
    for boundaries in (BoundarySpec.walls(), BoundarySpec({"ymax": PressureOutlet(1.0)})):
        prob = micro_problem(boundaries, n_steps=10)
        region = np.zeros(prob.grid.shape, bool)
        region[4:7, 7:10] = True
        objectives = (
            Objective(ObjectiveSpec("pressure", boundary_nodes(prob.grid.shape)), prob.n_steps),
            Objective(ObjectiveSpec("flow", region, direction=(0.6, 0.8)), prob.n_steps),
        )
        gamma = rng.uniform(0.2, 0.8, prob.design_grid.shape)
        for obj in objectives:
            sens = run_adjoint(prob, gamma, run_forward(prob, gamma, obj), obj).sensitivity
            for _ in range(10):
                v = rng.normal(size=gamma.shape)
                h = 1e-5
                jp = run_forward(prob, gamma + h * v, obj, record=False).objective
                jm = run_forward(prob, gamma - h * v, obj, record=False).objective
                fd = (jp - jm) / (2 * h)
                ad = float(np.vdot(sens, v))
                worst = max(worst, abs(ad - fd) / max(abs(fd), 1e-12))
                count += 1
    runtime = time.perf_counter() - t0
    ok = worst < 1e-4 and runtime < 60.0
    detail = f"directions={count} worst_rel_err={worst:.2e} runtime={runtime:.1f}s"
    assert acceptance(3, "micro-instance adjoint exactness", ok, detail), detail


def _exact_moments_ok():
    for model in (D2Q9, D3Q15):
        c = [tuple(int(x) for x in ci) for ci in model.c]
        w = model.exact_w
        d = model.d
        if sum(w) != 1:
            return False
        for idx in itertools.chain.from_iterable(itertools.product(range(d), repeat=k) for k in (1, 2, 3, 4)):
            m = sum(wi * math.prod(ci[a] for a in idx) for wi, ci in zip(w, c))
            if len(idx) in (1, 3):
                expect = 0
            elif len(idx) == 2:
                expect = Fraction(1, 3) if idx[0] == idx[1] else 0
            else:
                a, b, g, e = idx
                expect = Fraction(1, 9) * ((a == b) * (g == e) + (a == g) * (b == e) + (a == e) * (b == g))
            if m != expect:
                return False
    return True


def test_criterion_4_conservation_suite(acceptance):
    rng = np.random.default_rng(4)
    motion = MotionSpec(pivot=(2.5, 2.5), rotation=ConstantRotation(200.0), translation=SinusoidalTranslation((12.0, 12.0), (2.0, 1.0), 150.0))
    prob = periodic_problem((24, 24), 1000, motion=motion, design_shape=(6, 6), kappa_max=100.0)
    fw = run_forward(prob, rng.uniform(0, 1, (6, 6)), record=False)
    mass_drift = abs(fw.final.rho.sum() - 576.0) / 576.0

    grid = UniformGrid((20, 20))
    pts = rng.uniform(3.0, 16.0, (200, 2))
    st = OverlapStencil(pts, grid)
    pou = float(np.abs(st.weight.sum(axis=1) - 1.0).max())
    v, f = rng.normal(size=200), rng.normal(size=grid.shape)
    lhs, rhs = float(np.vdot(st.scatter(v), f)), float(np.vdot(v, st.gather(f)))
    transpose = abs(lhs - rhs) / max(abs(lhs), 1.0)

    moments = _exact_moments_ok()
    rates = [shear_wave_rate(A=A) for A in (0.0, 0.25)]
    shear = max(abs(m - e) / e for m, e in rates)

    checks = {
        "mass": mass_drift < 1e-12,
        "partition": pou < 1e-12,
        "transpose": transpose < 1e-12,
        "moments": moments,
        "shear": shear < 0.02,
    }
    detail = (
        f"mass_drift={mass_drift:.1e} partition={pou:.1e} transpose={transpose:.1e} "
        f"moments_exact={moments} shear_rate_err={shear:.4f}"
    )
    assert acceptance(4, "conservation suite", all(checks.values()), detail), detail


def test_criterion_5_rotor_monotone(acceptance, tmp_path):
    case = build_case(load_case("rotor2d_small"))
    t0 = time.perf_counter()
    result = optimization_loop(case, LoopControl.from_case(case), tmp_path)
    runtime = time.perf_counter() - t0
    frac = monotone_fraction(result.history, sign=-1.0)
    last = result.final
    checks = {
        "monotone>=0.9": frac >= 0.9,
        "G<=1e-6": last.G <= FEASIBILITY_TOL,
        "v_max=0.25": last.v_max == 0.25,
        "time<2h": runtime < 7200.0,
    }
    detail = (
        f"steps={len(result.history)} monotone_fraction={frac:.3f} final_G={last.G:.2e} "
        f"-J1 {-result.history[0].J:.6e}->{-last.J:.6e} beta={last.beta:g} runtime={runtime:.0f}s"
    )
    assert acceptance(5, "rotor2d_small -J1 trend and feasibility", all(checks.values()), detail), detail


def test_criterion_6_pump_beats_reference(acceptance, tmp_path):
    case = build_case(load_case("pump2d_small"))
    result = optimization_loop(case, LoopControl.from_case(case), tmp_path)
    periods = 3
    optimized, _, _ = run_periods(case.problem, result.design.physical, case.objective, periods)
    reference, _, _ = run_periods(case.problem, case.reference_design(), case.objective, periods)
    # J is the window-averaged -n.u, so -J is the mean directed flow over the last period
    ours, ref = -optimized[-1], -reference[-1]
    ok = ours > ref
    detail = f"-J2 optimized={ours:.4e} reference={ref:.4e} (period {periods} from rest) steps={len(result.history)}"
    assert acceptance(6, "pump2d_small optimized beats reference", ok, detail), detail


def _mma_solve(x0, grad, cons, iters=50):
    x = np.asarray(x0, dtype=float)
    state = MmaState.new(x)
    for k in range(1, iters + 1):
        g, dg = cons(x) if cons else (np.zeros(0), np.zeros((0, x.size)))
        x_new = mma_update(x, grad(x), g, dg, state)
        step = float(np.abs(x_new - x).max())
        x = x_new
        if step < 1e-6:
            break
    return x, k


def test_criterion_7_mma_problems(acceptance):
    xq, kq = _mma_solve(np.full(25, 0.9), lambda x: 2 * (x - 0.3), None)
    err_q = float(np.abs(xq - 0.3).max())
    n, v = 20, 0.3
    c = np.where(np.arange(n) < int(v * n), 1.0, 0.5)
    cons = lambda x: (np.array([x.mean() / v - 1.0]), np.full((1, n), 1.0 / (v * n)))
    xl, kl = _mma_solve(np.full(n, v), lambda x: -c, cons)
    exact = (np.arange(n) < int(v * n)).astype(float)
    err_l = float(np.abs(xl - exact).max())
    ok = err_q < 1e-4 and err_l < 1e-4 and kq <= 50 and kl <= 50
    detail = f"quadratic err={err_q:.1e} iters={kq}; linear+volume err={err_l:.1e} iters={kl}"
    assert acceptance(7, "MMA analytic problems", ok, detail), detail


def test_criterion_8_bitwise_history(acceptance, tmp_path):
    case_a = build_case(load_case("rotor2d_small"))
    case_b = build_case(load_case("rotor2d_small"))
    control = LoopControl.from_case(case_a, max_steps=3)
    optimization_loop(case_a, control, tmp_path / "a")
    optimization_loop(case_b, control, tmp_path / "b")
    a = (tmp_path / "a" / "history.csv").read_bytes()
    b = (tmp_path / "b" / "history.csv").read_bytes()
    ok = a == b and a.count(b"\n") == 4
    detail = f"identical={a == b} bytes={len(a)}"
    assert acceptance(8, "bitwise reproducible history.csv", ok, detail), detail
