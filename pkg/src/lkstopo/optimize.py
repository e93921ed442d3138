"""Design optimisation loop: forward, adjoint, MMA update, continuation.

Each optimisation step runs the flow for the design, evaluates ``J`` and the
volume constraint ``G``, sweeps the adjoint for ``dJ/dgamma``, applies the
filter/projection chain rule and moves the raw design with MMA.  The
projection steepness ``beta`` doubles on a fixed cadence or when ``J`` has
stopped fluctuating, and the volume limit follows the case schedule.  Both
kinds of change are logged as events on the step where they take effect.
"""

from __future__ import annotations

import csv
import dataclasses
import logging
import time
from pathlib import Path

import numpy as np

from .adjoint import run_adjoint
from .design import DesignField
from .forward import FlowProblem, SolverDivergence, run_forward
from .gallery import Case
from .lattice import FlowState
from .mma import MmaState, mma_update
from .objectives import ConstraintSpec, Objective, eval_G, volume_sensitivity

log = logging.getLogger(__name__)

HISTORY_FIELDS = ("step", "J", "G", "beta", "v_max", "event")
FEASIBILITY_TOL = 1e-6


class OptimizationAborted(RuntimeError):
    """The flow solver diverged; the last good design was checkpointed."""

    def __init__(self, step: int, checkpoint: Path | None, cause: Exception):
        where = f", last good design in {checkpoint}" if checkpoint else ""
        super().__init__(f"optimisation aborted at step {step}: {cause}{where}")
        self.step = step
        self.checkpoint = checkpoint


@dataclasses.dataclass(frozen=True)
class LoopControl:
    """Stopping rule and continuation cadence.

    Attributes:
      max_steps: optimisation steps to run at most.
      tol: relative change of J that counts as converged.
      beta_max: projection steepness cap; convergence also needs beta there.
      beta_first: steps at the starting beta before the first doubling.
      beta_interval: steps between later doublings.
      fluctuation_window: consecutive steps whose relative J change must
        all stay below ``fluctuation_tol`` to trigger an early doubling.
      move: MMA move limit.
    """

    max_steps: int = 300
    tol: float = 1e-6
    beta_max: float = 1024.0
    beta_first: int = 80
    beta_interval: int = 80
    fluctuation_window: int = 5
    fluctuation_tol: float = 1e-4
    move: float = 0.2

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("convergence tolerance must be positive")
        if self.max_steps < 1 or self.beta_first < 1 or self.beta_interval < 1:
            raise ValueError("step counts must be positive")

    @classmethod
    def from_case(cls, case: Case, max_steps: int | None = None) -> "LoopControl":
        f, o = case.config.filter, case.config.optimizer
        return cls(
            max_steps=max_steps or o.max_steps,
            tol=o.tol,
            beta_max=f.beta_max,
            beta_first=f.beta_first,
            beta_interval=f.beta_interval,
            fluctuation_window=f.fluctuation_window,
            fluctuation_tol=f.fluctuation_tol,
            move=o.move,
        )


def relative_change(j: float, j_prev: float) -> float:
    if j_prev == 0.0:
        return 0.0 if j == 0.0 else float("inf")
    return abs((j - j_prev) / j_prev)


def is_converged(j: float, j_prev: float, g: float, beta: float, control: LoopControl) -> bool:
    """Relative J change within tolerance, design feasible and beta at its cap."""
    return relative_change(j, j_prev) <= control.tol and g <= FEASIBILITY_TOL and beta >= control.beta_max


def fluctuation_settled(values: list[float], window: int, tol: float) -> bool:
    """True when the last ``window`` relative changes are all below ``tol``."""
    if len(values) < window + 1:
        return False
    tail = values[-(window + 1) :]
    return all(relative_change(b, a) < tol for a, b in zip(tail[:-1], tail[1:]))


@dataclasses.dataclass
class StepRecord:
    step: int
    J: float
    G: float
    beta: float
    v_max: float
    event: str = ""
    wall_time: float = 0.0


@dataclasses.dataclass
class OptimizationResult:
    design: DesignField
    history: list[StepRecord]
    converged: bool
    state: FlowState | None = None

    @property
    def final(self) -> StepRecord:
        return self.history[-1]


def evaluate(problem: FlowProblem, objective: Objective, gamma: np.ndarray, initial=None, terminal=None, stride=None):
    """Forward and adjoint for one design; returns ``(forward, adjoint)``."""
    fw = run_forward(problem, gamma, objective, initial=initial, checkpoint_stride=stride)
    adj = run_adjoint(problem, gamma, fw, objective, terminal=terminal)
    return fw, adj


class HistoryWriter:
    """``history.csv`` (deterministic columns) and ``timing.csv`` (wall time)."""

    def __init__(self, run_dir: Path):
        self.run_dir = Path(run_dir)
        self.run_dir.mkdir(parents=True, exist_ok=True)
        self._hist = open(self.run_dir / "history.csv", "w", newline="")
        self._time = open(self.run_dir / "timing.csv", "w", newline="")
        self._hw = csv.writer(self._hist, lineterminator="\n")
        self._tw = csv.writer(self._time, lineterminator="\n")
        self._hw.writerow(HISTORY_FIELDS)
        self._tw.writerow(("step", "wall_time"))

    def write(self, rec: StepRecord):
        self._hw.writerow((rec.step, repr(rec.J), repr(rec.G), repr(rec.beta), repr(rec.v_max), rec.event))
        self._tw.writerow((rec.step, f"{rec.wall_time:.3f}"))
        self._hist.flush()
        self._time.flush()

    def close(self):
        self._hist.close()
        self._time.close()


def save_checkpoint(path: Path, design: DesignField, step: int, mma: MmaState):
    np.savez(
        path,
        gamma_raw=design.raw,
        beta=design.beta,
        step=step,
        low=mma.low,
        upp=mma.upp,
        xold1=mma.xold1,
        xold2=mma.xold2,
        iteration=mma.iteration,
    )


def optimization_loop(
    case: Case,
    control: LoopControl | None = None,
    run_dir: str | Path | None = None,
    callback=None,
) -> OptimizationResult:
    """Run the optimisation for ``case``.

    ``callback(record, design)`` is called after every logged step.  With a
    ``run_dir`` the history CSVs and a rolling ``checkpoint.npz`` of the raw
    design are written there.
    """
    control = control or LoopControl.from_case(case)
    problem, objective = case.problem, case.objective
    constraint: ConstraintSpec = case.constraint
    design = case.new_design()
    mma = MmaState.new(design.raw, move=control.move)
    writer = HistoryWriter(Path(run_dir)) if run_dir is not None else None
    checkpoint = Path(run_dir) / "checkpoint.npz" if run_dir is not None else None
    history: list[StepRecord] = []
    since_event: list[float] = []
    last_beta_change = 0
    pending_events: list[str] = []
    state, carry = None, None
    scale = None
    converged = False
    t0 = time.perf_counter()
    try:
        for k in range(control.max_steps):
            v_max = constraint.at(k)
            if k > 0 and v_max != constraint.at(k - 1):
                pending_events.append("v_max")
                since_event = []
            gamma = design.physical
            initial = state if case.warm_restart else None
            terminal = carry if case.warm_restart else None
            try:
                fw, adj = evaluate(problem, objective, gamma, initial, terminal, case.checkpoint_stride)
            except SolverDivergence as exc:
                raise OptimizationAborted(k, checkpoint, exc) from exc
            state, carry = fw.final, adj.carry
            J = fw.objective
            G = eval_G(gamma, v_max)
            rec = StepRecord(k, J, G, design.beta, v_max, "+".join(pending_events), time.perf_counter() - t0)
            history.append(rec)
            if writer:
                writer.write(rec)
            if checkpoint is not None:
                save_checkpoint(checkpoint, design, k, mma)
            if callback is not None:
                callback(rec, design)
            log.info("step %d J=%.9e G=%.3e beta=%g v_max=%g %s", k, J, G, design.beta, v_max, rec.event)

            event_now = bool(pending_events)
            pending_events = []
            if k > 0 and not event_now and is_converged(J, history[-2].J, G, design.beta, control):
                converged = True
                break
            since_event.append(J)
            if k == control.max_steps - 1:
                break

            dJ = design.chain_rule(adj.sensitivity)
            dG = design.chain_rule(volume_sensitivity(gamma, v_max))
            if scale is None:
                peak = float(np.abs(dJ).max())
                scale = 1.0 / peak if peak > 0 else 1.0
            design.raw = mma_update(design.raw, scale * dJ, np.array([G]), dG.reshape(1, -1), mma)

            steps_at_beta = k + 1 - last_beta_change
            cadence = control.beta_first if last_beta_change == 0 else control.beta_interval
            settled = fluctuation_settled(since_event, control.fluctuation_window, control.fluctuation_tol)
            if design.beta < control.beta_max and (steps_at_beta >= cadence or settled):
                design.beta = min(2.0 * design.beta, control.beta_max)
                last_beta_change = k + 1
                pending_events.append("beta")
                since_event = []
    finally:
        if writer:
            writer.close()
    return OptimizationResult(design=design, history=history, converged=converged, state=state)


def read_history(path: str | Path) -> list[StepRecord]:
    rows = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            rows.append(
                StepRecord(int(row["step"]), float(row["J"]), float(row["G"]), float(row["beta"]), float(row["v_max"]), row["event"])
            )
    return rows


def monotone_fraction(history: list[StepRecord], sign: float = -1.0) -> float:
    """Share of event-free steps on which ``sign * J`` did not decrease.

    A step is skipped when it carries a logged beta or volume-limit event,
    since the change of problem lands between it and its predecessor.  With
    ``sign = -1`` this checks that ``-J`` is non-decreasing.
    """
    good = total = 0
    for prev, cur in zip(history[:-1], history[1:]):
        if cur.event:
            continue
        total += 1
        if sign * cur.J >= sign * prev.J:
            good += 1
    return good / total if total else 1.0
