"""Outage-constrained planner for Gaussian location errors.

Node positions carry circular Gaussian estimation errors; constraints must
hold with probability at least 1 - rho (eavesdroppers, jointly) and 1 - phi
(each primary user, per slot).  The joint eavesdropper chance constraint is
decoupled into per-Eve constraints at level rho_split = 1 - (1-rho)^(1/K),
and each per-node chance constraint is replaced by its Bernstein-type safe
approximation: one affine row plus one dimension-7 second-order cone per node
per slot.  No PSD blocks are needed, which is why this design solves faster
than the worst-case one at equal instance size.

Like the worst-case builder, the subproblem is declared once with its
linearization coefficients as Parameters and re-targeted through a
refresh(point) closure across outer iterations.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np
import cvxpy as cp

from .conic import ConicProgram
from .scenario import Scenario, Solution
from .sca import (
    DEFAULT_EPSILON,
    DEFAULT_MAX_ITERS,
    ExpansionPoint,
    SolveTrace,
    run_sca,
)
from .worst_case import _declare_common, _solution_from_program

__all__ = [
    "decouple_outage",
    "bernstein_certified_range2",
    "matched_radius",
    "bernstein_terms",
    "build_ocr_subproblem",
    "run_algorithm2",
]


def decouple_outage(rho: float, n_eves: int) -> float:
    """Per-Eve outage level whose K-fold product recovers the joint level:
    1 - (1 - rho)^(1/K)."""
    if not 0.0 < rho < 1.0:
        raise ValueError("rho must lie in (0, 1)")
    if n_eves < 1:
        raise ValueError("n_eves must be at least 1")
    return 1.0 - (1.0 - rho) ** (1.0 / n_eves)


def matched_radius(std_m: float, coverage_p: float) -> float:
    """Bounded radius holding a Gaussian error with probability coverage_p.

    The squared error norm over std^2 is chi-square with 2 degrees of freedom,
    whose quantile has the closed form -2 ln(1 - p), so the radius is
    std * sqrt(-2 ln(1 - p)).  This is how the fixture makes the two
    uncertainty models directly comparable.
    """
    if std_m < 0:
        raise ValueError("std_m must be nonnegative")
    if not 0.0 < coverage_p < 1.0:
        raise ValueError("coverage_p must lie in (0, 1)")
    return std_m * math.sqrt(-2.0 * math.log1p(-coverage_p))


def bernstein_terms(std_m: float, outage_p: float):
    """Constant pieces of the Bernstein safe approximation for one node.

    For the quadratic ||q - c - std*x||^2 with x ~ N(0, I2): curvature matrix
    A = std^2 I2 (trace 2 std^2, ||vec(A)|| = sqrt(2) std^2) and the tail
    coefficients sqrt(-2 ln p) and ln p.  Returns (trace_term, vec_a,
    sqrt_coeff, log_p).
    """
    if std_m < 0:
        raise ValueError("std_m must be nonnegative")
    if not 0.0 < outage_p < 1.0:
        raise ValueError("outage_p must lie in (0, 1)")
    s2 = std_m**2
    vec_a = np.array([s2, 0.0, 0.0, s2])
    return 2.0 * s2, vec_a, math.sqrt(-2.0 * math.log(outage_p)), math.log(outage_p)


def bernstein_certified_range2(d2_m2, std_m: float, outage_p: float, altitude_m: float):
    """Largest squared-range floor the Bernstein approximation certifies at a
    given true squared horizontal distance (norm slack tight, tail shift 0):

        d^2 + H^2 + 2 std^2 - sqrt(-2 ln p) * sqrt(2 std^4 + 2 std^2 d^2).

    May be negative very close to a high-uncertainty node, in which case no
    power level satisfies the chance constraint there.  Vectorized over d2_m2.
    """
    trace_term, _, sqrt_coeff, _ = bernstein_terms(std_m, outage_p)
    d2 = np.asarray(d2_m2, dtype=float)
    norm = np.sqrt(2.0 * std_m**4 + 2.0 * std_m**2 * d2)
    return d2 + altitude_m**2 + trace_term - sqrt_coeff * norm


def _declare_bernstein(
    prog: ConicProgram,
    scenario: Scenario,
    q,
    nodes,
    stds: list[float],
    outage_p: float,
    caps,
    norm_slack,
    tail_shift,
    family: str,
) -> Callable[[ExpansionPoint], None]:
    """One affine tail row plus one dim-7 SOC per node per slot; returns the
    closure that re-targets each node's squared-distance linearization.

    caps[j, n] is the required squared-range floor the chance constraint must
    certify (coupled to powers elsewhere); norm_slack/tail_shift are the two
    Bernstein slack matrices for this node family.  The tail row is the
    squared-metre inequality trace - sqrt_coeff*norm + log_p*shift + lin_d2
    + H^2 - cap >= 0 scaled by 1/s^2 at the expansion point.  Only the
    affine row depends on the expansion point; the SOC is point-free.
    """
    n = scenario.n_slots
    h2 = scenario.altitude_m**2
    updates: list[Callable[[ExpansionPoint], None]] = []
    for j, node in enumerate(nodes):
        std = stds[j]
        trace_term, vec_a, sqrt_coeff, log_p = bernstein_terms(std, outage_p)
        center = np.asarray(node.center_xy_m, dtype=float)
        # Both the tail row and the SOC live in squared metres (~1e4..1e6);
        # scale them to O(1) so they do not dominate the solver's relative
        # feasibility metric.  The row uses the 1/s^2 parameter (slant range
        # at the expansion point); the point-free SOC uses a fixed constant.
        p_g = prog.add_parameter(f"{family}{j}_grad", (n, 2))
        p_c = prog.add_parameter(f"{family}{j}_const", n)
        p_s2 = prog.add_parameter(f"{family}{j}_inv_range2", n)
        lin_d2 = 2.0 * cp.sum(cp.multiply(p_g, q), axis=1) + p_c
        prog.add_linear(
            trace_term * p_s2 - sqrt_coeff * cp.multiply(p_s2, norm_slack[j, :])
            + log_p * cp.multiply(p_s2, tail_shift[j, :])
            + lin_d2 - cp.multiply(p_s2, caps[j, :]) >= 0,
            family,
        )
        # SOC vector [vec(A); sqrt(2) * std * (center - q)] per slot.
        anchors = np.array([scenario.q_init_xy_m, scenario.q_final_xy_m, scenario.su_xy_m])
        reach = float(np.max(np.linalg.norm(anchors - center[None, :], axis=1)))
        soc_scale = 1.0 / max(1.0, math.sqrt(2.0) * std * max(reach, scenario.altitude_m),
                              float(np.max(vec_a, initial=0.0)))
        const_part = np.tile(vec_a, (n, 1))
        lin_part = math.sqrt(2.0) * std * (center[None, :] - q)
        if isinstance(lin_part, np.ndarray):
            soc_vec: cp.Expression = cp.Constant(soc_scale * np.hstack([const_part, lin_part]))
        else:
            soc_vec = soc_scale * cp.hstack([cp.Constant(const_part), lin_part])
        prog.add_soc(soc_scale * norm_slack[j, :], soc_vec, family)

        def update_node(pt: ExpansionPoint, j=j, center=center):
            grad = pt.waypoints_m - center[None, :]
            s2 = np.sum(grad**2, axis=1) + h2
            prog.set_parameter(f"{family}{j}_grad", grad / s2[:, None])
            prog.set_parameter(
                f"{family}{j}_const",
                (h2 - np.sum(grad * (center[None, :] + pt.waypoints_m), axis=1)) / s2,
            )
            prog.set_parameter(f"{family}{j}_inv_range2", 1.0 / s2)

        updates.append(update_node)

    def refresh(pt: ExpansionPoint) -> None:
        for update in updates:
            update(pt)

    return refresh


def build_ocr_subproblem(
    scenario: Scenario,
    point: ExpansionPoint,
    fix_trajectory: bool = False,
) -> ConicProgram:
    """Assemble the convex subproblem of the Gaussian-error design at a point.

    The program comes back parametrized with a refresh(point) closure
    attached: the outer loop compiles it once, then re-targets the
    linearization coefficients and re-solves.

    Census families: the shared kinematics/power families plus eve_chance and
    pu_chance (each contributing N affine rows and N dim-7 SOC blocks per
    node).  Requires gaussian_std_m on every node.
    """
    prog = ConicProgram(name="ocr_subproblem")
    fixed_q = point.waypoints_m.copy() if fix_trajectory else None
    q, tau, alpha, phi, gamma, eve_caps, pu_caps, refresh_common = _declare_common(
        prog, scenario, fixed_q
    )

    eve_stds, pu_stds = [], []
    for label, nodes, out in (("eves", scenario.eves, eve_stds), ("pus", scenario.pus, pu_stds)):
        for j, node in enumerate(nodes):
            if node.gaussian_std_m is None:
                raise ValueError(
                    f"{label}[{j}] has no gaussian_std_m; required by the outage model"
                )
            out.append(node.gaussian_std_m)

    n = scenario.n_slots
    eve_norm = prog.add_variable("eve_soc_norm", (scenario.n_eves, n), nonneg=True)
    eve_shift = prog.add_variable("eve_tail_shift", (scenario.n_eves, n), nonneg=True)
    pu_norm = prog.add_variable("pu_soc_norm", (scenario.n_pus, n), nonneg=True)
    pu_shift = prog.add_variable("pu_tail_shift", (scenario.n_pus, n), nonneg=True)

    rho_split = decouple_outage(scenario.rho, scenario.n_eves)
    refresh_eve = _declare_bernstein(prog, scenario, q, scenario.eves, eve_stds, rho_split,
                                     eve_caps, eve_norm, eve_shift, "eve_chance")
    refresh_pu = _declare_bernstein(prog, scenario, q, scenario.pus, pu_stds, scenario.phi,
                                    pu_caps, pu_norm, pu_shift, "pu_chance")

    def refresh(pt: ExpansionPoint) -> None:
        refresh_common(pt)
        refresh_eve(pt)
        refresh_pu(pt)

    prog.refresh = refresh
    refresh(point)
    return prog


def run_algorithm2(
    scenario: Scenario,
    initial: ExpansionPoint | None = None,
    epsilon: float = DEFAULT_EPSILON,
    max_iters: int = DEFAULT_MAX_ITERS,
    fix_trajectory: bool = False,
    model_label: str = "ocr",
) -> tuple[Solution, SolveTrace]:
    """Iterate the Gaussian-error subproblem to convergence."""
    if initial is None:
        from .baselines import initial_iterate

        initial = initial_iterate(scenario, model="probabilistic")

    point, program, trace = run_sca(
        initial,
        lambda pt: build_ocr_subproblem(scenario, pt, fix_trajectory=fix_trajectory),
        epsilon=epsilon,
        max_iters=max_iters,
    )
    return _solution_from_program(scenario, point, program, trace, model_label), trace
