import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from lkstopo.design import BrinkmanParams
from lkstopo.forward import FlowProblem
from lkstopo.lattice import UniformGrid
from lkstopo.motion import ConstantRotation, MotionSpec, SinusoidalTranslation

settings.register_profile("lkstopo", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("lkstopo")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running checks")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def micro_problem(boundaries=None, n_steps=10, kappa_max=10.0, **kw):
    """A 12x12 analysis grid with a 5x5 body that rotates and oscillates."""
    grid = UniformGrid((12, 12))
    design = UniformGrid((5, 5))
    motion = MotionSpec(
        pivot=(2.0, 2.0),
        rotation=ConstantRotation(40.0),
        translation=SinusoidalTranslation((5.5, 5.5), (0.0, 1.0), 20.0),
    )
    extra = {} if boundaries is None else {"boundaries": boundaries}
    return FlowProblem(
        grid, design, motion, n_steps=n_steps, history_dtype="float64", brinkman=BrinkmanParams(kappa_max, 0.1), **extra, **kw
    )


_ACCEPTANCE: list[str] = []


@pytest.fixture
def acceptance(capsys):
    """Record and print one PASS/FAIL line for an acceptance criterion."""

    def report(number: int, title: str, ok: bool, detail: str) -> bool:
        line = f"ACCEPTANCE {number} {'PASS' if ok else 'FAIL'}: {title} | {detail}"
        _ACCEPTANCE.append(line)
        with capsys.disabled():
            print("\n" + line, flush=True)
        return ok

    return report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE):
            terminalreporter.write_line(line)
