"""Worst-case robust planner for bounded location errors.

Each eavesdropper/primary-user position is known only up to a disk of given
radius.  The per-slot robust constraints ("squared range to every point of the
disk at least some cap") are turned into single 3x3 linear matrix inequalities
by the S-procedure, the remaining non-convexities are linearized at the
current expansion point, and the resulting conic subproblem is iterated to a
stationary plan.

All three surrogate builders return LOWER bounds of the quantity they replace,
which is what makes every subproblem solution feasible for the true model.

The subproblems of successive outer iterations share their entire structure
and differ only in linearization coefficients, so the builders declare those
coefficients as solver Parameters and attach a refresh(point) closure; the
outer loop then re-solves one compiled program instead of re-canonicalizing
~10^4 expressions per iteration.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np
import cvxpy as cp

from .conic import ConicProgram
from .scenario import Scenario, Solution
from .sca import (
    ALPHA_FLOOR,
    DEFAULT_EPSILON,
    DEFAULT_MAX_ITERS,
    FEAS_BACKOFF,
    MIN_POWER_FRACTION,
    PHI_FLOOR,
    ExpansionPoint,
    SolveTrace,
    clamped_objective,
    run_sca,
)

__all__ = [
    "neg_log_tangent",
    "inv_product_tangent",
    "linearized_sq_distance",
    "s_procedure_lmi",
    "build_wcr_subproblem",
    "run_algorithm1",
]

_LN2 = math.log(2.0)


def neg_log_tangent(phi, phi_ref):
    """Tangent of -log2(1 + phi) at phi_ref: a lower bound, tight at phi_ref.

    Accepts numpy arrays or CVXPY expressions for phi.
    """
    ref = np.asarray(phi_ref, dtype=float)
    if np.any(ref <= -1.0):
        raise ValueError("phi_ref must exceed -1")
    return -np.log2(1.0 + ref) - (phi - ref) / ((1.0 + ref) * _LN2)


def inv_product_tangent(x, y, x_ref, y_ref, coeff: float = 1.0):
    """Tangent plane of coeff / (x * (y - 1)) at (x_ref, y_ref).

    The function is jointly convex for x > 0, y > 1, so the tangent is a
    global lower bound, tight at the reference point.  Used for the served
    link's power term with x = inverse power and y = 1 + SNR.
    """
    xr = np.asarray(x_ref, dtype=float)
    yr = np.asarray(y_ref, dtype=float)
    if np.any(xr <= 0.0):
        raise ValueError("x_ref must be positive")
    if np.any(yr <= 1.0):
        raise ValueError("y_ref must exceed 1")
    g = yr - 1.0
    return coeff * (1.0 / (xr * g) - (x - xr) / (xr**2 * g) - (y - yr) / (xr * g**2))


def linearized_sq_distance(q, q_ref, center):
    """Affine lower bound of ||q - center||^2, tight at q = q_ref.

    q and q_ref are (N, 2) (CVXPY expression or array); center is (2,).
    Returns an (N,) affine expression (q_ref - c)^T (2 q - c - q_ref).
    """
    ref = np.asarray(q_ref, dtype=float)
    c = np.asarray(center, dtype=float)
    lhs = ref - c  # constant (N, 2)
    if isinstance(q, np.ndarray):
        return np.sum(lhs * (2.0 * q - c - ref), axis=-1)
    return cp.sum(cp.multiply(lhs, 2.0 * q - c[None, :] - ref), axis=1)


def s_procedure_lmi(q_n, q_ref_n, center, radius: float, range2_cap, multiplier,
                    altitude_m: float, scale: float | None = None):
    """3x3 LMI certifying ||q - (center + delta)||^2 + H^2 >= range2_cap for
    every ||delta|| <= radius, with the squared distance linearized at q_ref.

    q_n: the slot's waypoint (CVXPY (2,) expression or constant array);
    range2_cap and multiplier are scalar expressions (multiplier >= 0 is the
    S-procedure certificate).  Returns the symmetric affine matrix to be
    constrained PSD.

    The returned matrix is congruence-scaled by diag(1, 1, 1/scale), which
    leaves positive semidefiniteness unchanged but keeps all entries near
    unit magnitude (the raw corner carries squared meters, ~1e5, which stalls
    interior-point solvers inside a single PSD block).  scale defaults to the
    reference slant range; pass scale=1.0 for the unscaled matrix.
    """
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    c = np.asarray(center, dtype=float)
    ref = np.asarray(q_ref_n, dtype=float)
    if scale is None:
        scale = math.sqrt(float((ref - c) @ (ref - c)) + altitude_m**2)
    if scale <= 0:
        raise ValueError("scale must be positive")
    grad = ref - c  # gradient direction of the squared distance at the reference
    tangent_arg = 2.0 * q_n - c - ref
    if isinstance(tangent_arg, np.ndarray):
        lin_d2 = float(grad @ tangent_arg)
    else:
        lin_d2 = cp.sum(cp.multiply(grad, tangent_arg))
    corner = (lin_d2 + altitude_m**2 - range2_cap - multiplier * radius**2) / scale**2
    offset = q_n - c
    offset = (cp.Constant(offset) if isinstance(offset, np.ndarray) else offset) / scale
    corner_e = corner if isinstance(corner, cp.expressions.expression.Expression) else cp.Constant(corner)
    return cp.bmat(
        [
            [(multiplier + 1.0) * np.eye(2), -cp.reshape(offset, (2, 1), order="C")],
            [-cp.reshape(offset, (1, 2), order="C"), cp.reshape(corner_e, (1, 1), order="C")],
        ]
    )


def _sym_unit(i: int, j: int) -> np.ndarray:
    m = np.zeros((3, 3))
    m[i, j] = m[j, i] = 1.0
    return m


# Symmetric basis matrices of the S-procedure LMI: the disk identity block,
# the scalar corner, and the two waypoint-offset cross terms.
_E_DISK = np.diag([1.0, 1.0, 0.0])
_E_CORNER = np.diag([0.0, 0.0, 1.0])
_E_CROSS_X = _sym_unit(0, 2)
_E_CROSS_Y = _sym_unit(1, 2)


def _declare_common(
    prog: ConicProgram,
    scenario: Scenario,
    fixed_q: np.ndarray | None,
):
    """Declare everything both designs share: kinematics, the served-link
    cone, the power/SNR couplings, the interference budget, and the objective.

    Every expansion-point coefficient is a named Parameter; the returned
    refresh closure re-targets them at a point, so the caller can re-solve the
    compiled program along the outer iteration.  Pass fixed_q (an (N, 2)
    trajectory) to plan power only, or None to make the waypoints decision
    variables.

    Returns (q, tau, alpha, phi, gamma, eve_caps, pu_caps, refresh); the
    caller adds its model-specific robust range floors on the cap variables.
    The interference split gamma is expressed in units of the interference
    threshold for conditioning; reports convert back to watts.
    """
    n = scenario.n_slots
    h2 = scenario.altitude_m**2
    su = np.asarray(scenario.su_xy_m, dtype=float)

    if fixed_q is None:
        # Endpoints are data, not decisions: only the interior waypoints are
        # variables and the fixed ends are spliced in as constants, so the
        # reported plan meets them exactly (an equality row would carry
        # solver-tolerance dust scaled by the ~200 m coordinates).
        q_mid = prog.add_variable("waypoints_interior", (n - 2, 2))
        q: cp.Expression | np.ndarray = cp.vstack([
            cp.Constant(np.asarray(scenario.q_init_xy_m, dtype=float)[None, :]),
            q_mid,
            cp.Constant(np.asarray(scenario.q_final_xy_m, dtype=float)[None, :]),
        ])
        step = scenario.v_max_mps * scenario.slot_s * (1.0 - FEAS_BACKOFF)
        prog.add_soc(np.full(n - 1, step), q[1:, :] - q[: n - 1, :], "mobility")
    else:
        fixed_q = np.asarray(fixed_q, dtype=float)
        q = fixed_q

    tau = prog.add_variable("inv_power", n, lower=1.0 / scenario.p_max_w)
    # Written with a unit right-hand side; large constants on the right of
    # any row dilate the solver's relative feasibility metric for all rows.
    prog.add_linear(MIN_POWER_FRACTION * scenario.p_avg_w * tau <= 1.0, "min_power")
    alpha = prog.add_variable("snr_plus_one", n, lower=ALPHA_FLOOR)
    phi = prog.add_variable("eve_snr_cap", n, lower=PHI_FLOOR)
    gamma = prog.add_variable("interference_split", (scenario.n_pus, n), nonneg=True)
    eve_caps = prog.add_variable("eve_power_term_m2", (scenario.n_eves, n), nonneg=True)
    pu_caps = prog.add_variable("pu_power_term_m2", (scenario.n_pus, n), nonneg=True)

    # Served link: ||(q - su)/s||^2 <= (theta - H^2)/s^2, where theta is the
    # tangent of the hyperbolic power term at the expansion point and s the
    # reference slant range.  The 1/s^2 normalization (which keeps the cone
    # members near unit magnitude) is folded into the tangent coefficients
    # numerically so each coefficient stays a single Parameter.
    p_su_c = prog.add_parameter("served_const", n)
    p_su_t = prog.add_parameter("served_tau_coef", n)
    p_su_a = prog.add_parameter("served_alpha_coef", n)
    served_cap = p_su_c + cp.multiply(p_su_t, tau) + cp.multiply(p_su_a, alpha)
    if fixed_q is None:
        p_su_v = prog.add_parameter("served_inv_range", (n, 2))
        p_su_o = prog.add_parameter("served_offset", (n, 2))
        served_vec: cp.Expression = cp.multiply(p_su_v, q) - p_su_o
    else:
        s0 = np.sqrt(np.sum((fixed_q - su[None, :]) ** 2, axis=1) + h2)
        served_vec = cp.Constant((fixed_q - su[None, :]) / s0[:, None])
    prog.add_squared_norm_bound(served_vec, served_cap, "served_link")

    # Power/SNR couplings, pre-normalized so every cone member is O(1) at the
    # expansion point (the raw link coefficients span ~1e7).  The interference
    # split needs no normalization: its budget is N, so it is O(1) already.
    p_tau_inv = prog.add_parameter("inv_power_ref_inv", n)
    p_phi_inv = prog.add_parameter("eve_snr_ref_inv", n)
    tau_n = cp.multiply(p_tau_inv, tau)
    phi_n = cp.multiply(p_phi_inv, phi)
    p_eve_t = prog.add_parameter("eve_link_scale", (scenario.n_eves, n))
    for k in range(scenario.n_eves):
        prog.add_inverse_product_bound(
            tau_n, phi_n, cp.multiply(p_eve_t[k, :], eve_caps[k, :]),
            1.0 + FEAS_BACKOFF, "eve_power_link"
        )
    p_pu_t = prog.add_parameter("pu_link_scale", (scenario.n_pus, n))
    for l in range(scenario.n_pus):
        prog.add_inverse_product_bound(
            tau_n, gamma[l, :], cp.multiply(p_pu_t[l, :], pu_caps[l, :]),
            1.0 + FEAS_BACKOFF, "pu_power_link"
        )
        prog.add_linear(cp.sum(gamma[l, :]) / n <= 1.0, "interference_budget")

    p_tau_ref = prog.add_parameter("inv_power_ref", n)
    prog.add_reciprocal_sum_bound(tau, scenario.p_avg_w, "average_power",
                                  scale_pair=(p_tau_ref, p_tau_inv))

    prog.add_log_objective(1.0 / n, alpha)
    p_rate_c = prog.add_parameter("eve_rate_const", n)
    p_rate_s = prog.add_parameter("eve_rate_slope", n)
    prog.add_objective((cp.sum(p_rate_c) + cp.sum(cp.multiply(p_rate_s, phi))) / n)
    prog.objective_scale = 100.0 * n

    coeff_su = scenario.beta0 / scenario.noise_su_w
    noise_eve = np.asarray(scenario.noise_eve_w, dtype=float)

    def refresh(pt: ExpansionPoint) -> None:
        if pt.n_slots != n:
            raise ValueError("expansion point and scenario disagree on n_slots")
        if fixed_q is not None and not np.array_equal(pt.waypoints_m, fixed_q):
            raise ValueError("fixed-trajectory program refreshed with a different trajectory")
        tau_r, alpha_r, phi_r = pt.inv_power, pt.snr_plus_one, pt.eve_snr_cap
        gain = alpha_r - 1.0
        s2 = np.sum((pt.waypoints_m - su[None, :]) ** 2, axis=1) + h2
        if fixed_q is None:
            s = np.sqrt(s2)
            prog.set_parameter("served_inv_range", np.repeat((1.0 / s)[:, None], 2, axis=1))
            prog.set_parameter("served_offset", su[None, :] / s[:, None])
        # Tangent of coeff_su / (tau * (alpha - 1)) at (tau_r, alpha_r),
        # expanded into constant + tau-coefficient + alpha-coefficient; the
        # tangent (not the altitude term) is shrunk by the feasibility
        # backoff so the claimed served rate stays certifiable.
        shrink = 1.0 - FEAS_BACKOFF
        prog.set_parameter(
            "served_const",
            (shrink * coeff_su * (2.0 + alpha_r / gain) / (tau_r * gain) - h2) / s2,
        )
        prog.set_parameter("served_tau_coef", -shrink * coeff_su / (tau_r**2 * gain) / s2)
        prog.set_parameter("served_alpha_coef", -shrink * coeff_su / (tau_r * gain**2) / s2)
        prog.set_parameter("inv_power_ref", tau_r)
        prog.set_parameter("inv_power_ref_inv", 1.0 / tau_r)
        prog.set_parameter("eve_snr_ref_inv", 1.0 / phi_r)
        prog.set_parameter(
            "eve_link_scale", (tau_r * phi_r)[None, :] * (noise_eve / scenario.beta0)[:, None]
        )
        prog.set_parameter(
            "pu_link_scale",
            np.tile(tau_r * scenario.it_threshold_w / scenario.beta0, (scenario.n_pus, 1)),
        )
        prog.set_parameter(
            "eve_rate_const", phi_r / ((1.0 + phi_r) * _LN2) - np.log2(1.0 + phi_r)
        )
        prog.set_parameter("eve_rate_slope", -1.0 / ((1.0 + phi_r) * _LN2))

    return q, tau, alpha, phi, gamma, eve_caps, pu_caps, refresh


def _declare_disk_floors(
    prog: ConicProgram,
    scenario: Scenario,
    q,
) -> Callable[[ExpansionPoint], None]:
    """Emit the robust range floors of the bounded-error model and return the
    closure that re-targets their linearization parameters at a point.

    Positive-radius nodes contribute one 3x3 PSD block per slot: the matrix
    of s_procedure_lmi assembled from four constant symmetric basis matrices
    with parametric coefficients (numerically identical, but the expression
    tree stays fixed across re-solves and is born symmetric).  Zero-radius
    nodes degenerate to affine range rows with their multiplier pinned at
    zero (the S-procedure certificate is vacuous for a point set).
    """
    n = scenario.n_slots
    h2 = scenario.altitude_m**2
    lam = prog.add_variable("eve_multiplier", (scenario.n_eves, n), nonneg=True)
    mu = prog.add_variable("pu_multiplier", (scenario.n_pus, n), nonneg=True)
    e_disk, e_corner = cp.Constant(_E_DISK), cp.Constant(_E_CORNER)
    e_x, e_y = cp.Constant(_E_CROSS_X), cp.Constant(_E_CROSS_Y)

    updates: list[Callable[[ExpansionPoint], None]] = []
    for nodes, caps_name, mults, family in (
        (scenario.eves, "eve_power_term_m2", lam, "eve_robust"),
        (scenario.pus, "pu_power_term_m2", mu, "pu_robust"),
    ):
        caps = prog.variables[caps_name]
        for j, node in enumerate(nodes):
            radius = node.bounded_radius_m
            if radius is None:
                raise ValueError(
                    f"{family}: node {j} has no bounded_radius_m; required by the worst-case model"
                )
            center = np.asarray(node.center_xy_m, dtype=float)
            if radius == 0.0:
                # Same 1/s^2 normalization as the disk corner below: the raw
                # row lives in squared metres (~1e4..1e6) and would dominate
                # the solver's relative feasibility metric.
                p_g = prog.add_parameter(f"{family}{j}_grad", (n, 2))
                p_c = prog.add_parameter(f"{family}{j}_const", n)
                p_s2 = prog.add_parameter(f"{family}{j}_inv_range2", n)
                lin_d2 = 2.0 * cp.sum(cp.multiply(p_g, q), axis=1) + p_c
                prog.add_linear(cp.multiply(p_s2, caps[j, :]) <= lin_d2, family)
                prog.add_linear(mults[j, :] == 0.0, f"{family}_multiplier_pinned")

                def update_point_node(pt: ExpansionPoint, j=j, family=family, center=center):
                    grad = pt.waypoints_m - center[None, :]
                    s2 = np.sum(grad**2, axis=1) + h2
                    prog.set_parameter(f"{family}{j}_grad", grad / s2[:, None])
                    prog.set_parameter(
                        f"{family}{j}_const",
                        (h2 - np.sum(grad * (center[None, :] + pt.waypoints_m), axis=1)) / s2,
                    )
                    prog.set_parameter(f"{family}{j}_inv_range2", 1.0 / s2)

                updates.append(update_point_node)
                continue

            # diag(1, 1, 1/s)-scaled S-procedure matrix, slot by slot:
            #   (mult+1) E_disk + corner E_corner - offx E_x - offy E_y
            # with corner = (lin_d2 + H^2 - cap - r^2 mult)/s^2 and
            # off = (q - c)/s; all 1/s powers live in the parameters.
            p_g = prog.add_parameter(f"{family}{j}_grad", (n, 2))
            p_c = prog.add_parameter(f"{family}{j}_const", n)
            p_s2 = prog.add_parameter(f"{family}{j}_inv_range2", n)
            p_s1 = prog.add_parameter(f"{family}{j}_inv_range", n)
            p_cen = prog.add_parameter(f"{family}{j}_center", (n, 2))
            corner = (
                2.0 * cp.sum(cp.multiply(p_g, q), axis=1) + p_c
                - cp.multiply(p_s2, caps[j, :] + radius**2 * mults[j, :])
            )
            off_x = cp.multiply(p_s1, q[:, 0]) - p_cen[:, 0]
            off_y = cp.multiply(p_s1, q[:, 1]) - p_cen[:, 1]
            for i in range(n):
                prog.add_psd3(
                    (mults[j, i] + 1.0) * e_disk + corner[i] * e_corner
                    - off_x[i] * e_x - off_y[i] * e_y,
                    family,
                )

            def update_disk_node(pt: ExpansionPoint, j=j, family=family, center=center):
                grad = pt.waypoints_m - center[None, :]
                s2 = np.sum(grad**2, axis=1) + h2
                s = np.sqrt(s2)
                prog.set_parameter(f"{family}{j}_grad", grad / s2[:, None])
                prog.set_parameter(
                    f"{family}{j}_const",
                    (h2 - np.sum(grad * (center[None, :] + pt.waypoints_m), axis=1)) / s2,
                )
                prog.set_parameter(f"{family}{j}_inv_range2", 1.0 / s2)
                prog.set_parameter(f"{family}{j}_inv_range", 1.0 / s)
                prog.set_parameter(f"{family}{j}_center", center[None, :] / s[:, None])

            updates.append(update_disk_node)

    def refresh(pt: ExpansionPoint) -> None:
        for update in updates:
            update(pt)

    return refresh


def build_wcr_subproblem(
    scenario: Scenario,
    point: ExpansionPoint,
    fix_trajectory: bool = False,
) -> ConicProgram:
    """Assemble the convex subproblem of the bounded-error design at a point.

    The program comes back parametrized with a refresh(point) closure
    attached: the outer loop compiles it once, then re-targets the
    linearization coefficients and re-solves.

    Census families: the shared kinematics/power families plus eve_robust and
    pu_robust, one 3x3 PSD block per node per slot.
    """
    prog = ConicProgram(name="wcr_subproblem")
    fixed_q = point.waypoints_m.copy() if fix_trajectory else None
    q, tau, alpha, phi, gamma, eve_caps, pu_caps, refresh_common = _declare_common(
        prog, scenario, fixed_q
    )
    refresh_floors = _declare_disk_floors(prog, scenario, q)

    def refresh(pt: ExpansionPoint) -> None:
        refresh_common(pt)
        refresh_floors(pt)

    prog.refresh = refresh
    refresh(point)
    return prog


def run_algorithm1(
    scenario: Scenario,
    initial: ExpansionPoint | None = None,
    epsilon: float = DEFAULT_EPSILON,
    max_iters: int = DEFAULT_MAX_ITERS,
    fix_trajectory: bool = False,
    model_label: str = "wcr",
) -> tuple[Solution, SolveTrace]:
    """Iterate the bounded-error subproblem to convergence.

    The reported secrecy rate is the exact model objective at the final point
    (per-slot clamped at zero), a lower bound on the true average secrecy rate
    at the adversarial node positions.
    """
    if initial is None:
        from .baselines import initial_iterate

        initial = initial_iterate(scenario, model="bounded")

    point, program, trace = run_sca(
        initial,
        lambda pt: build_wcr_subproblem(scenario, pt, fix_trajectory=fix_trajectory),
        epsilon=epsilon,
        max_iters=max_iters,
    )
    return _solution_from_program(scenario, point, program, trace, model_label), trace


def _solution_from_program(
    scenario: Scenario,
    point: ExpansionPoint,
    program: ConicProgram,
    trace: SolveTrace,
    model_label: str,
) -> Solution:
    """Shared Solution assembly for both planners (slack names overlap)."""
    slacks: dict[str, object] = {}
    for name, var in program.variables.items():
        if name.startswith("_") or name == "waypoints_interior":
            continue
        value = np.asarray(program.value(name))
        if name == "interference_split":
            slacks["interference_cap_w"] = (scenario.it_threshold_w * value).tolist()
        else:
            slacks[name] = value.tolist()
    slacks["eve_rate_cap"] = np.log2(point.eve_snr_cap + 1.0).tolist()
    return Solution(
        model=model_label,
        objective_bps_hz=clamped_objective(point.snr_plus_one, point.eve_snr_cap),
        waypoints_m=point.waypoints_m.tolist(),
        powers_w=point.powers_w.tolist(),
        slacks=slacks,
        iterations=trace.iterations,
        converged=trace.converged,
    )
