"""Initial iterates and benchmark schemes.

The initializer produces the classical fly-hover-fly plan: race to the point
above the served user at top speed, hover there as long as the mission allows,
then race to the final point.  Power starts uniform at the average budget and
is bisected down until the active model's interference constraints hold, so
the first subproblem of either algorithm is feasible at its expansion point.

Benchmarks: a non-robust variant (all error radii zeroed, then the worst-case
pipeline) and fixed-trajectory variants (path pinned to the initializer,
power-only robust allocation under either model).
"""

from __future__ import annotations

import math

import numpy as np

from .channels import worst_case_gain
from .outage import bernstein_certified_range2, decouple_outage
from .scenario import Scenario, Solution, UncertainNode
from .sca import (
    ALPHA_FLOOR,
    DEFAULT_EPSILON,
    DEFAULT_MAX_ITERS,
    FEAS_BACKOFF,
    MIN_POWER_FRACTION,
    PHI_FLOOR,
    ExpansionPoint,
    SolveTrace,
)

__all__ = [
    "InfeasibleScenario",
    "fly_hover_fly_path",
    "initial_iterate",
    "non_robust",
    "fixed_trajectory",
]

_POWER_BISECT_TOL_W = 1e-9


class InfeasibleScenario(RuntimeError):
    """The initializer cannot produce any feasible plan for this scenario."""


def fly_hover_fly_path(scenario: Scenario) -> np.ndarray:
    """(N, 2) waypoints: q_init -> above the SU -> q_final at top speed.

    Leftover slots are spent hovering above the SU.  Raises
    InfeasibleScenario when the detour through the SU does not fit in the
    mission duration (the endpoints may still be mutually reachable).
    """
    n = scenario.n_slots
    # Same backed-off step as the subproblem mobility rows, so this path is
    # feasible for the first linearized program, not just the true model.
    step = scenario.v_max_mps * scenario.slot_s * (1.0 - FEAS_BACKOFF)
    q_init = np.asarray(scenario.q_init_xy_m, dtype=float)
    q_final = np.asarray(scenario.q_final_xy_m, dtype=float)
    hover = np.asarray(scenario.su_xy_m, dtype=float)

    dist_in = float(np.linalg.norm(hover - q_init))
    dist_out = float(np.linalg.norm(q_final - hover))
    moves_in = math.ceil(max(dist_in - 1e-9, 0.0) / step)
    moves_out = math.ceil(max(dist_out - 1e-9, 0.0) / step)
    if moves_in + moves_out > n - 1:
        raise InfeasibleScenario(
            "fly-hover-fly path does not fit: the detour via the SU needs "
            f"{moves_in + moves_out} moves but only {n - 1} are available"
        )

    path = np.tile(hover, (n, 1))
    for i in range(moves_in + 1):
        frac = min(i * step, dist_in) / dist_in if dist_in > 0 else 1.0
        path[i] = q_init + frac * (hover - q_init)
    for i in range(moves_out + 1):
        frac = min(i * step, dist_out) / dist_out if dist_out > 0 else 1.0
        path[n - 1 - i] = q_final + frac * (hover - q_final)
    return path


def _effective_gains(scenario: Scenario, path: np.ndarray, model: str):
    """Per-node per-slot conservative gain g such that g * P is the largest
    interference (PUs) or sigma^2 * SNR (Eves) the active model must budget
    for.  Raises InfeasibleScenario where the outage model certifies nothing.
    """
    h = scenario.altitude_m
    beta0 = scenario.beta0
    rho_split = decouple_outage(scenario.rho, scenario.n_eves)

    def one(node: UncertainNode, label: str, outage_p: float) -> np.ndarray:
        if model == "bounded":
            if node.bounded_radius_m is None:
                raise ValueError(f"{label} has no bounded_radius_m; required by the worst-case model")
            return worst_case_gain(path, node.center_xy_m, node.bounded_radius_m, h, beta0)
        if node.gaussian_std_m is None:
            raise ValueError(f"{label} has no gaussian_std_m; required by the outage model")
        d2 = np.sum((path - np.asarray(node.center_xy_m)) ** 2, axis=1)
        range2 = bernstein_certified_range2(d2, node.gaussian_std_m, outage_p, h)
        if np.any(range2 <= 0):
            raise InfeasibleScenario(
                f"chance constraint for {label} cannot be certified along the "
                "initial path at any positive power (the path flies too close)"
            )
        return beta0 / range2

    pu_gains = np.array(
        [one(node, f"pus[{l}]", scenario.phi) for l, node in enumerate(scenario.pus)]
    ).reshape(scenario.n_pus, scenario.n_slots)
    eve_gains = np.array(
        [one(node, f"eves[{k}]", rho_split) for k, node in enumerate(scenario.eves)]
    ).reshape(scenario.n_eves, scenario.n_slots)
    return pu_gains, eve_gains


def initial_iterate(scenario: Scenario, model: str = "bounded") -> ExpansionPoint:
    """Fly-hover-fly expansion point with uniform power scaled to feasibility.

    model selects which interference formulation the power must respect:
    "bounded" (worst case over error disks) or "probabilistic" (Bernstein
    certificates at the Gaussian stds).
    """
    if model not in ("bounded", "probabilistic"):
        raise ValueError('model must be "bounded" or "probabilistic"')
    path = fly_hover_fly_path(scenario)
    pu_gains, eve_gains = _effective_gains(scenario, path, model)

    def interference_ok(p: float) -> bool:
        return bool(np.all(pu_gains.mean(axis=1) * p <= scenario.it_threshold_w))

    power = scenario.p_avg_w
    if not interference_ok(power):
        lo, hi = 0.0, power
        while hi - lo > _POWER_BISECT_TOL_W:
            mid = 0.5 * (lo + hi)
            if interference_ok(mid):
                lo = mid
            else:
                hi = mid
        power = lo
    if power < MIN_POWER_FRACTION * scenario.p_avg_w:
        raise InfeasibleScenario(
            "no power at or above the per-slot minimum satisfies the "
            "interference constraints on the initial path"
        )

    d2_su = np.sum((path - np.asarray(scenario.su_xy_m)) ** 2, axis=1)
    snr_su = scenario.beta0 * power / (scenario.noise_su_w * (d2_su + scenario.altitude_m**2))
    noise_eve = np.asarray(scenario.noise_eve_w)
    eve_snr = (power * eve_gains / noise_eve[:, None]).max(axis=0)

    return ExpansionPoint(
        waypoints_m=path,
        inv_power=np.full(scenario.n_slots, 1.0 / power),
        snr_plus_one=np.maximum(1.0 + snr_su, ALPHA_FLOOR),
        eve_snr_cap=np.maximum(eve_snr, PHI_FLOOR),
    )


def non_robust(
    scenario: Scenario,
    epsilon: float = DEFAULT_EPSILON,
    max_iters: int = DEFAULT_MAX_ITERS,
) -> tuple[Solution, SolveTrace]:
    """Plan as if node locations were exact (all error radii zeroed).

    The claimed objective is optimistic; evaluate it under the true
    uncertainty (e.g. the worst-case certifier) before comparing schemes.
    """
    from .worst_case import run_algorithm1

    def zeroed(node: UncertainNode) -> UncertainNode:
        return UncertainNode(node.center_xy_m, 0.0, node.gaussian_std_m)

    stripped = scenario.replace(
        pus=tuple(zeroed(n) for n in scenario.pus),
        eves=tuple(zeroed(n) for n in scenario.eves),
    )
    return run_algorithm1(stripped, epsilon=epsilon, max_iters=max_iters,
                          model_label="nonrobust")


def fixed_trajectory(
    scenario: Scenario,
    model: str = "bounded",
    epsilon: float = DEFAULT_EPSILON,
    max_iters: int = DEFAULT_MAX_ITERS,
) -> tuple[Solution, SolveTrace]:
    """Power-only robust allocation along the fly-hover-fly path.

    model="bounded" is benchmark scheme fixed1, model="probabilistic" is
    fixed2.  The SCA loop still runs: the power/SNR surrogates stay nonlinear
    even with the trajectory pinned.
    """
    from .outage import run_algorithm2
    from .worst_case import run_algorithm1

    initial = initial_iterate(scenario, model=model)
    if model == "bounded":
        return run_algorithm1(scenario, initial=initial, epsilon=epsilon,
                              max_iters=max_iters, fix_trajectory=True,
                              model_label="fixed1")
    return run_algorithm2(scenario, initial=initial, epsilon=epsilon,
                          max_iters=max_iters, fix_trajectory=True,
                          model_label="fixed2")
