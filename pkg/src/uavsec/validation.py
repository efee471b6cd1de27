"""Independent certification of planner output.

Nothing here touches the conic machinery: claims are re-checked against the
closed-form channel model only, via adversarial disk search (worst-case
model) and Monte-Carlo sampling (outage model).  A solution passes only if
every claimed constraint holds at the stated tolerance against these oracles.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .channels import channel_gain, link_rate, worst_case_gain
from .conic import TOL_FEAS, TOL_GAP
from .scenario import Scenario, Solution
from .sca import SolveTrace

__all__ = [
    "ValidationReport",
    "disk_grid_points",
    "certify_worst_case",
    "certify_outage",
    "check_hessian_psd",
    "audit_trace",
]

GRID_RADIAL = 32
GRID_ANGULAR = 32
MIN_OUTAGE_SAMPLES = 1000
DEFAULT_OUTAGE_SAMPLES = 100_000
DEFAULT_MARGIN_SIGMAS = 3.0


@dataclass
class ValidationReport:
    """Outcome of one certification: pass/fail plus the numbers behind it."""

    kind: str
    passed: bool
    tolerance: float
    max_violation: float
    details: dict[str, Any] = field(default_factory=dict)

    def to_json(self) -> str:
        payload = {
            "kind": self.kind,
            "passed": self.passed,
            "tolerance": self.tolerance,
            "max_violation": self.max_violation,
            "details": self.details,
        }
        return json.dumps(payload, indent=2, sort_keys=True)


def disk_grid_points(center, radius: float, toward_xy) -> np.ndarray:
    """Polar grid over an error disk plus the analytic extreme point.

    Rays are aligned so one of them points from the center toward toward_xy,
    and the gain-maximizing disk point (nearest-point projection of
    toward_xy) is appended explicitly; the grid max is then exactly the disk
    max for the radially-monotone channel gain.
    """
    c = np.asarray(center, dtype=float)
    target = np.asarray(toward_xy, dtype=float)
    gap = target - c
    d = float(np.linalg.norm(gap))
    base_angle = math.atan2(gap[1], gap[0]) if d > 0 else 0.0
    radii = np.linspace(0.0, radius, GRID_RADIAL)
    angles = base_angle + 2.0 * math.pi * np.arange(GRID_ANGULAR) / GRID_ANGULAR
    pts = c[None, :] + (
        radii[:, None, None] * np.stack([np.cos(angles), np.sin(angles)], axis=-1)[None, :, :]
    ).reshape(-1, 2)
    unit = gap / d if d > 0 else np.zeros(2)
    extreme = c + min(d, radius) * unit
    return np.vstack([pts, extreme])


def _slack_array(solution: Solution, key: str, shape: tuple[int, ...]) -> np.ndarray:
    if key not in solution.slacks:
        raise ValueError(f"solution lacks required slack {key!r}; cannot certify")
    arr = np.asarray(solution.slacks[key], dtype=float)
    if arr.shape != shape:
        raise ValueError(f"slack {key!r} has shape {arr.shape}, expected {shape}")
    return arr


def certify_worst_case(
    solution: Solution,
    scenario: Scenario,
    tol: float = TOL_FEAS,
) -> ValidationReport:
    """Check every worst-case claim of a solution against the disk oracle.

    Violations measured: per-slot eavesdropper rate above its claimed cap
    (adversarial disk position), claimed served-link rate above the true one,
    per-slot and averaged interference above the claimed split/threshold, and
    the kinematic/power budgets.  All must stay within tol.
    """
    n, k_eves, l_pus = scenario.n_slots, scenario.n_eves, scenario.n_pus
    q = np.asarray(solution.waypoints_m, dtype=float)
    p = np.asarray(solution.powers_w, dtype=float)
    if q.shape != (n, 2) or p.shape != (n,):
        raise ValueError("solution dimensions disagree with the scenario")
    h = scenario.altitude_m
    beta0 = scenario.beta0

    eve_rate_cap = _slack_array(solution, "eve_rate_cap", (n,))
    su_rate_claim = np.log2(_slack_array(solution, "snr_plus_one", (n,)))
    gamma_w = _slack_array(solution, "interference_cap_w", (l_pus, n))

    # Eavesdropper side: adversarial rate per slot per Eve, grid cross-check.
    eve_rate_wc = np.zeros((k_eves, n))
    grid_gap_rel = 0.0
    eve_positions = np.zeros((n, k_eves, 2))
    for k, node in enumerate(scenario.eves):
        radius = node.bounded_radius_m
        if radius is None:
            raise ValueError(f"eves[{k}] has no bounded_radius_m; cannot certify worst case")
        center = np.asarray(node.center_xy_m)
        for slot in range(n):
            closed = float(worst_case_gain(q[slot], center, radius, h, beta0))
            grid = disk_grid_points(center, radius, q[slot])
            grid_gain = float(np.max(channel_gain(q[slot], grid, h, beta0)))
            grid_gap_rel = max(grid_gap_rel, abs(closed - grid_gain) / closed)
            gain = max(closed, grid_gain)
            eve_rate_wc[k, slot] = link_rate(p[slot], gain, scenario.noise_eve_w[k])
            gap = q[slot] - center
            d = float(np.linalg.norm(gap))
            unit = gap / d if d > 0 else np.zeros(2)
            eve_positions[slot, k] = center + min(d, radius) * unit
    eve_violation = float(np.max(eve_rate_wc - eve_rate_cap[None, :]))

    # Served link: the claimed rate must not exceed the true one.
    su_rate_true = link_rate(p, channel_gain(q, scenario.su_xy_m, h, beta0), scenario.noise_su_w)
    su_violation = float(np.max(su_rate_claim - su_rate_true))

    # Interference: per-slot split and the averaged threshold, both in watts.
    slot_violation = -math.inf
    avg_violation = -math.inf
    for l, node in enumerate(scenario.pus):
        radius = node.bounded_radius_m
        if radius is None:
            raise ValueError(f"pus[{l}] has no bounded_radius_m; cannot certify worst case")
        wc_int = p * worst_case_gain(q, node.center_xy_m, radius, h, beta0)
        slot_violation = max(slot_violation, float(np.max(wc_int - gamma_w[l])))
        avg_violation = max(avg_violation, float(wc_int.mean() - scenario.it_threshold_w))

    # Kinematics and power budgets.
    steps = np.linalg.norm(np.diff(q, axis=0), axis=1)
    mobility_violation = float(np.max(steps - scenario.v_max_mps * scenario.slot_s))
    endpoint_violation = float(
        max(
            np.linalg.norm(q[0] - np.asarray(scenario.q_init_xy_m)),
            np.linalg.norm(q[-1] - np.asarray(scenario.q_final_xy_m)),
        )
    )
    avg_power_violation = float(p.mean() - scenario.p_avg_w)
    peak_power_violation = float(np.max(p) - scenario.p_max_w)

    # Certified secrecy rate at the adversarial Eve positions.
    per_slot = np.maximum(su_rate_true - eve_rate_wc.max(axis=0), 0.0)
    certified = float(per_slot.mean())

    violations = {
        "eve_rate_bps_hz": eve_violation,
        "su_rate_bps_hz": su_violation,
        "slot_interference_w": slot_violation,
        "avg_interference_w": avg_violation,
        "mobility_m": mobility_violation,
        "endpoints_m": endpoint_violation,
        "avg_power_w": avg_power_violation,
        "peak_power_w": peak_power_violation,
    }
    worst = max(violations.values())
    return ValidationReport(
        kind="worst_case",
        passed=bool(worst <= tol),
        tolerance=tol,
        max_violation=worst,
        details={
            "violations": violations,
            "claimed_objective_bps_hz": solution.objective_bps_hz,
            "certified_objective_bps_hz": certified,
            "grid_vs_closed_form_rel_gap": grid_gap_rel,
            "adversarial_eve_positions_m": eve_positions.tolist(),
        },
    )


def certify_outage(
    solution: Solution,
    scenario: Scenario,
    samples: int = DEFAULT_OUTAGE_SAMPLES,
    seed: int = 0,
    margin_sigmas: float = DEFAULT_MARGIN_SIGMAS,
    tol: float = TOL_FEAS,
) -> ValidationReport:
    """Monte-Carlo check of the chance constraints a solution claims.

    Draws Gaussian location errors (one batch per node, reused across slots),
    counts per-slot violations of the claimed eavesdropper rate caps (jointly
    over Eves, level rho) and of each claimed per-PU interference split
    (level phi), and compares against the level plus a margin_sigmas binomial
    margin.  Violations are counted beyond tol so a binding constraint at
    solver precision is not misread as outage.
    """
    if samples < MIN_OUTAGE_SAMPLES:
        raise ValueError(f"samples must be at least {MIN_OUTAGE_SAMPLES}")
    n, k_eves, l_pus = scenario.n_slots, scenario.n_eves, scenario.n_pus
    q = np.asarray(solution.waypoints_m, dtype=float)
    p = np.asarray(solution.powers_w, dtype=float)
    h = scenario.altitude_m
    beta0 = scenario.beta0

    eve_rate_cap = _slack_array(solution, "eve_rate_cap", (n,))
    gamma_w = _slack_array(solution, "interference_cap_w", (l_pus, n))

    rng = np.random.default_rng(seed)
    eve_pos = np.zeros((k_eves, samples, 2))
    for k, node in enumerate(scenario.eves):
        if node.gaussian_std_m is None:
            raise ValueError(f"eves[{k}] has no gaussian_std_m; cannot certify outage")
        eve_pos[k] = np.asarray(node.center_xy_m) + node.gaussian_std_m * rng.standard_normal(
            (samples, 2)
        )
    pu_pos = np.zeros((l_pus, samples, 2))
    for l, node in enumerate(scenario.pus):
        if node.gaussian_std_m is None:
            raise ValueError(f"pus[{l}] has no gaussian_std_m; cannot certify outage")
        pu_pos[l] = np.asarray(node.center_xy_m) + node.gaussian_std_m * rng.standard_normal(
            (samples, 2)
        )

    eve_outage = np.zeros(n)
    pu_outage = np.zeros((l_pus, n))
    for slot in range(n):
        worst_rate = np.full(samples, -np.inf)
        for k in range(k_eves):
            gain = channel_gain(q[slot], eve_pos[k], h, beta0)
            rate = link_rate(p[slot], gain, scenario.noise_eve_w[k])
            np.maximum(worst_rate, rate, out=worst_rate)
        eve_outage[slot] = np.mean(worst_rate > eve_rate_cap[slot] + tol)
        for l in range(l_pus):
            interference = p[slot] * channel_gain(q[slot], pu_pos[l], h, beta0)
            pu_outage[l, slot] = np.mean(interference > gamma_w[l, slot] + tol)

    eve_margin = margin_sigmas * math.sqrt(scenario.rho * (1 - scenario.rho) / samples)
    pu_margin = margin_sigmas * math.sqrt(scenario.phi * (1 - scenario.phi) / samples)
    eve_excess = float(np.max(eve_outage) - (scenario.rho + eve_margin))
    pu_excess = float(np.max(pu_outage) - (scenario.phi + pu_margin)) if l_pus else -math.inf
    return ValidationReport(
        kind="outage",
        passed=bool(eve_excess <= 0.0 and pu_excess <= 0.0),
        tolerance=tol,
        max_violation=max(eve_excess, pu_excess),
        details={
            "samples": samples,
            "seed": seed,
            "margin_sigmas": margin_sigmas,
            "eve_level": scenario.rho,
            "pu_level": scenario.phi,
            "eve_outage_max": float(np.max(eve_outage)),
            "pu_outage_max": float(np.max(pu_outage)) if l_pus else 0.0,
            "eve_outage_per_slot": eve_outage.tolist(),
            "pu_outage_per_slot": pu_outage.tolist(),
        },
    )


def check_hessian_psd(n_samples: int = 1000, seed: int = 0) -> ValidationReport:
    """Verify convexity of (x, y) -> 1/(x*y) on the positive orthant.

    The analytic Hessian (1/(x*y)) * [[2/x^2, 1/(x*y)], [1/(x*y), 2/y^2]]
    must be PSD at random positive points and must match central finite
    differences entrywise; this underpins every inverse-product bound and
    tangent surrogate in the planners.
    """
    rng = np.random.default_rng(seed)
    pts = np.exp(rng.uniform(math.log(0.05), math.log(20.0), size=(n_samples, 2)))
    min_eig = math.inf
    max_fd_rel = 0.0

    def f(x: float, y: float) -> float:
        return 1.0 / (x * y)

    for x, y in pts:
        hess = (1.0 / (x * y)) * np.array(
            [[2.0 / x**2, 1.0 / (x * y)], [1.0 / (x * y), 2.0 / y**2]]
        )
        min_eig = min(min_eig, float(np.linalg.eigvalsh(hess)[0]))
        hx = 1e-4 * x
        hy = 1e-4 * y
        fd = np.array(
            [
                [
                    (f(x + hx, y) - 2 * f(x, y) + f(x - hx, y)) / hx**2,
                    (f(x + hx, y + hy) - f(x + hx, y - hy) - f(x - hx, y + hy) + f(x - hx, y - hy))
                    / (4 * hx * hy),
                ],
                [0.0, (f(x, y + hy) - 2 * f(x, y) + f(x, y - hy)) / hy**2],
            ]
        )
        fd[1, 0] = fd[0, 1]
        max_fd_rel = max(max_fd_rel, float(np.max(np.abs(fd - hess) / np.abs(hess))))

    passed = min_eig >= -1e-12 and max_fd_rel <= 1e-5
    return ValidationReport(
        kind="hessian_psd",
        passed=bool(passed),
        tolerance=1e-5,
        max_violation=max(-min_eig, max_fd_rel),
        details={"min_eigenvalue": min_eig, "max_finite_difference_rel_error": max_fd_rel,
                 "n_samples": n_samples},
    )


def audit_trace(
    trace: SolveTrace,
    epsilon: float | None = None,
    monotone_slack: float | None = None,
) -> ValidationReport:
    """Check an SCA trace for monotonicity and the stopping rule.

    The objective sequence must be non-decreasing within monotone_slack
    (default 10 * TOL_GAP scaled by the objective magnitude), and the run must
    have stopped exactly when consecutive objectives first came within
    epsilon (or exhausted its iterations without ever doing so).
    """
    eps = trace.epsilon if epsilon is None else epsilon
    objs = trace.objectives
    if objs.size == 0:
        raise ValueError("trace has no iterations")
    slack = (
        10.0 * TOL_GAP * (1.0 + float(np.max(np.abs(objs))))
        if monotone_slack is None
        else monotone_slack
    )
    diffs = np.diff(objs)
    max_dip = float(max(0.0, -np.min(diffs))) if diffs.size else 0.0
    monotone = max_dip <= slack

    if diffs.size == 0:
        epsilon_rule = not trace.converged
    elif trace.converged:
        epsilon_rule = abs(diffs[-1]) <= eps and bool(np.all(np.abs(diffs[:-1]) > eps))
    else:
        epsilon_rule = bool(np.all(np.abs(diffs) > eps))

    return ValidationReport(
        kind="trace_audit",
        passed=bool(monotone and epsilon_rule),
        tolerance=slack,
        max_violation=max_dip,
        details={
            "monotone": bool(monotone),
            "epsilon_rule": bool(epsilon_rule),
            "epsilon": eps,
            "iterations": trace.iterations,
            "converged": trace.converged,
            "objectives": objs.tolist(),
        },
    )
