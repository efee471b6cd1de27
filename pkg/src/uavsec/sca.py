"""Shared successive-convex-approximation machinery.

Both planners follow the same outer loop: linearize the non-convex pieces at
the current expansion point, solve the resulting conic subproblem, move the
expansion point to the subproblem solution, and stop once the exact model
objective changes by at most epsilon between consecutive iterations.  Because
every surrogate under-estimates the true constraint slack, each subproblem
solution is feasible for the original problem and the objective sequence is
non-decreasing up to solver tolerance.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .conic import ConicProgram, SolverStatus

__all__ = [
    "DEFAULT_EPSILON",
    "DEFAULT_MAX_ITERS",
    "ALPHA_FLOOR",
    "PHI_FLOOR",
    "MIN_POWER_FRACTION",
    "FEAS_BACKOFF",
    "InfeasibleSubproblem",
    "SubproblemFailure",
    "ExpansionPoint",
    "IterationRecord",
    "SolveTrace",
    "run_sca",
    "model_objective",
]

DEFAULT_EPSILON = 1e-4  # b/s/Hz change between consecutive iterations
DEFAULT_MAX_ITERS = 200

# Lower bounds keeping the log and inverse-product terms in-domain.
ALPHA_FLOOR = 1.0 + 1e-6
PHI_FLOOR = 1e-9
# The reciprocal-power change of variables needs strictly positive transmit
# power, so each slot keeps at least this fraction of the average budget.
# Slots driven to the floor are "off": their per-slot secrecy rate is
# negative-to-zero and reports as zero either way, and the diverted power is
# ~0.1% of budget -- but without the floor the optimizer walks inverse power
# toward infinity in such slots (the true supremum sits at zero power) and
# the linearization coefficients blow up long before the stopping rule fires.
MIN_POWER_FRACTION = 0.01

# Binding physical constraints are tightened by this relative amount inside
# the subproblems, so the interior-point solver's terminal residual (~1e-9
# relative, i.e. up to ~1e-7 absolute on 10 m steps) lands strictly inside
# the true feasible set.  The validation certificates check the untightened
# bounds; without the backoff a certificate on a binding row is a coin flip
# on solver dust.  Costs ~1e-7 of objective, far below every reported digit.
FEAS_BACKOFF = 1e-7


class InfeasibleSubproblem(RuntimeError):
    """First subproblem infeasible: the scenario admits no feasible plan."""


class SubproblemFailure(RuntimeError):
    """A subproblem failed mid-run; carries the iteration index."""

    def __init__(self, iteration: int, status: SolverStatus):
        self.iteration = iteration
        self.status = status
        super().__init__(f"subproblem failed at iteration {iteration}: "
                         f"{status.kind} ({status.raw_status})")


@dataclass
class ExpansionPoint:
    """Point the next subproblem linearizes around.

    waypoints_m: (N, 2) trajectory; inv_power: (N,) reciprocal transmit powers;
    snr_plus_one: (N,) served-link 1+SNR lower bounds (must exceed 1);
    eve_snr_cap: (N,) leakage-link SNR caps (must be positive).
    """

    waypoints_m: np.ndarray
    inv_power: np.ndarray
    snr_plus_one: np.ndarray
    eve_snr_cap: np.ndarray

    def __post_init__(self) -> None:
        self.waypoints_m = np.asarray(self.waypoints_m, dtype=float)
        self.inv_power = np.asarray(self.inv_power, dtype=float)
        self.snr_plus_one = np.asarray(self.snr_plus_one, dtype=float)
        self.eve_snr_cap = np.asarray(self.eve_snr_cap, dtype=float)
        n = self.waypoints_m.shape[0]
        if self.waypoints_m.shape != (n, 2):
            raise ValueError("waypoints_m must have shape (N, 2)")
        for name in ("inv_power", "snr_plus_one", "eve_snr_cap"):
            if getattr(self, name).shape != (n,):
                raise ValueError(f"{name} must have shape (N,)")
        if not np.all(self.inv_power > 0):
            raise ValueError("inv_power entries must be positive")
        if not np.all(self.snr_plus_one > 1):
            raise ValueError("snr_plus_one entries must exceed 1")
        if not np.all(self.eve_snr_cap > 0):
            raise ValueError("eve_snr_cap entries must be positive")

    @property
    def n_slots(self) -> int:
        return self.waypoints_m.shape[0]

    @property
    def powers_w(self) -> np.ndarray:
        return 1.0 / self.inv_power


@dataclass
class IterationRecord:
    iteration: int
    objective: float
    solver_status: str
    wall_ms: float


@dataclass
class SolveTrace:
    """Per-iteration objective/status/wall-time log of one SCA run."""

    epsilon: float
    records: list[IterationRecord] = field(default_factory=list)
    converged: bool = False

    @property
    def objectives(self) -> np.ndarray:
        return np.array([r.objective for r in self.records])

    @property
    def iterations(self) -> int:
        return len(self.records)

    def to_csv(self) -> str:
        lines = ["iteration,objective,solver_status,wall_ms"]
        for r in self.records:
            lines.append(f"{r.iteration},{r.objective:.9g},{r.solver_status},{r.wall_ms:.9g}")
        return "\n".join(lines) + "\n"


def model_objective(snr_plus_one: np.ndarray, eve_snr_cap: np.ndarray) -> float:
    """Exact model objective (1/N) sum(log2(alpha) - log2(phi+1)), no clamping."""
    return float(np.mean(np.log2(snr_plus_one) - np.log2(eve_snr_cap + 1.0)))


def clamped_objective(snr_plus_one: np.ndarray, eve_snr_cap: np.ndarray) -> float:
    """Reported secrecy rate: per-slot nonnegative part before averaging."""
    per_slot = np.log2(snr_plus_one) - np.log2(eve_snr_cap + 1.0)
    return float(np.maximum(per_slot, 0.0).mean())


def _extract_point(program: ConicProgram, point: ExpansionPoint) -> ExpansionPoint:
    """Read the next expansion point off a solved subproblem.

    When the trajectory is a decision, only its interior rows are variables;
    the fixed endpoints are spliced back from the previous point (rows 0 and
    N-1 of any iterate already hold them exactly).
    """
    if "waypoints_interior" in program.variables:
        waypoints = np.vstack([
            point.waypoints_m[:1],
            np.asarray(program.value("waypoints_interior")),
            point.waypoints_m[-1:],
        ])
    else:
        waypoints = point.waypoints_m
    return ExpansionPoint(
        waypoints_m=waypoints,
        inv_power=np.maximum(np.asarray(program.value("inv_power")), 1e-12),
        snr_plus_one=np.maximum(np.asarray(program.value("snr_plus_one")), ALPHA_FLOOR),
        eve_snr_cap=np.maximum(np.asarray(program.value("eve_snr_cap")), PHI_FLOOR),
    )


def run_sca(
    initial: ExpansionPoint,
    build_subproblem: Callable[[ExpansionPoint], ConicProgram],
    epsilon: float = DEFAULT_EPSILON,
    max_iters: int = DEFAULT_MAX_ITERS,
) -> tuple[ExpansionPoint, ConicProgram, SolveTrace]:
    """Run the SCA outer loop; returns the final point, the last solved
    subproblem (for slack extraction), and the iteration trace.

    When the builder attaches a refresh(point) closure to the program, the
    program is built (and canonicalized) once and re-targeted in place each
    iteration; otherwise it is rebuilt from scratch.  Wall time per iteration
    covers build-or-refresh plus solve.

    If the last subproblem ended in a reduced-accuracy state, the final point
    is polished once: the subproblem is rebuilt from scratch at that point and
    re-solved, and the result replaces the returned point/program only when it
    reaches full accuracy.  (The interior-point solver occasionally stops
    early on a near-converged duality gap; a fresh canonicalization of the
    same data reliably finishes the job.)  The trace is not extended by the
    polish step, so the returned point may differ from the last record at the
    stopping-tolerance scale.

    Raises InfeasibleSubproblem if the very first subproblem is infeasible and
    SubproblemFailure for any later non-recoverable solver outcome.  A solver
    iteration-limit outcome with a usable primal point is accepted and the
    loop continues.
    """
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    if max_iters < 1:
        raise ValueError("max_iters must be at least 1")

    point = initial
    trace = SolveTrace(epsilon=epsilon)
    program: ConicProgram | None = None
    prev_obj: float | None = None

    for it in range(1, max_iters + 1):
        t0 = time.perf_counter()
        if program is None or program.refresh is None:
            program = build_subproblem(point)
        else:
            program.refresh(point)
        status = program.solve()
        wall_ms = (time.perf_counter() - t0) * 1e3
        if not status.has_solution:
            if it == 1 and status.kind == "infeasible":
                raise InfeasibleSubproblem(
                    "first subproblem infeasible: no plan satisfies the constraints"
                )
            raise SubproblemFailure(it, status)

        point = _extract_point(program, point)
        obj = model_objective(point.snr_plus_one, point.eve_snr_cap)
        trace.records.append(IterationRecord(it, obj, status.kind, wall_ms))
        if prev_obj is not None and abs(obj - prev_obj) <= epsilon:
            trace.converged = True
            break
        prev_obj = obj

    assert program is not None
    if trace.records and trace.records[-1].solver_status != "optimal":
        fresh = build_subproblem(point)
        if fresh.solve().kind == "optimal":
            point = _extract_point(fresh, point)
            program = fresh
    return point, program, trace
