"""Bounded-error (worst-case) design: tangent surrogates are global lower
bounds, the disk LMI certifies exactly the clamped squared range, the
subproblem has the promised cone census, and the outer loop converges to a
certifiable plan on a small instance.
"""

from __future__ import annotations

import math

import cvxpy as cp
import numpy as np
import pytest

from uavsec import certify_worst_case, run_algorithm1
from uavsec.baselines import initial_iterate
from uavsec.conic import ConicProgram
from uavsec.sca import clamped_objective, run_sca
from uavsec.validation import audit_trace, disk_grid_points
from uavsec.worst_case import (
    build_wcr_subproblem,
    inv_product_tangent,
    linearized_sq_distance,
    neg_log_tangent,
    s_procedure_lmi,
)

_LN2 = math.log(2.0)


# -------------------------------------------------------- tangent oracles


def test_neg_log_tangent_reference_value():
    # At ref 1: -log2(2) - (3-1)/(2 ln 2) = -1 - 1/ln 2.
    assert neg_log_tangent(3.0, 1.0) == pytest.approx(-1.0 - 1.0 / _LN2, rel=1e-12)


def test_neg_log_tangent_exact_at_reference():
    rng = np.random.default_rng(3)
    refs = 10.0 ** rng.uniform(-6, 2, size=200)
    vals = neg_log_tangent(refs, refs)
    np.testing.assert_allclose(vals, -np.log2(1.0 + refs), rtol=0, atol=1e-12)


def test_neg_log_tangent_is_global_lower_bound():
    rng = np.random.default_rng(5)
    for _ in range(100):
        ref = float(10.0 ** rng.uniform(-6, 2))
        phi = 10.0 ** rng.uniform(-8, 3, size=100)
        assert np.all(neg_log_tangent(phi, ref) <= -np.log2(1.0 + phi) + 1e-12)


def test_neg_log_tangent_domain():
    with pytest.raises(ValueError, match="phi_ref must exceed -1"):
        neg_log_tangent(0.5, -1.0)


def test_inv_product_tangent_reference_value():
    # Tangent of 1/(x (y-1)) at (1, 2): 1 - (x-1) - (y-2) -> at (2,3): -1.
    assert inv_product_tangent(2.0, 3.0, 1.0, 2.0) == pytest.approx(-1.0, abs=1e-12)


def test_inv_product_tangent_exact_at_reference():
    rng = np.random.default_rng(7)
    for _ in range(100):
        xr = float(10.0 ** rng.uniform(-2, 2))
        yr = float(1.0 + 10.0 ** rng.uniform(-3, 2))
        coeff = float(10.0 ** rng.uniform(-3, 3))
        got = inv_product_tangent(xr, yr, xr, yr, coeff)
        assert got == pytest.approx(coeff / (xr * (yr - 1.0)), rel=1e-12)


def test_inv_product_tangent_is_global_lower_bound():
    rng = np.random.default_rng(11)
    for _ in range(100):
        xr = float(10.0 ** rng.uniform(-1, 1))
        yr = float(1.0 + 10.0 ** rng.uniform(-2, 1))
        x = 10.0 ** rng.uniform(-2, 2, size=50)
        y = 1.0 + 10.0 ** rng.uniform(-3, 2, size=50)
        tangent = inv_product_tangent(x, y, xr, yr, 2.5)
        true = 2.5 / (x * (y - 1.0))
        assert np.all(tangent <= true * (1.0 + 1e-12) + 1e-12)


def test_inv_product_tangent_domain():
    with pytest.raises(ValueError, match="x_ref must be positive"):
        inv_product_tangent(1.0, 2.0, 0.0, 2.0)
    with pytest.raises(ValueError, match="y_ref must exceed 1"):
        inv_product_tangent(1.0, 2.0, 1.0, 1.0)


def test_tangents_accept_cvxpy_expressions():
    val = neg_log_tangent(cp.Constant(np.array([3.0])), np.array([1.0]))
    assert float(val.value[0]) == pytest.approx(-1.0 - 1.0 / _LN2, rel=1e-12)
    val2 = inv_product_tangent(cp.Constant(2.0), cp.Constant(3.0), 1.0, 2.0)
    assert float(val2.value) == pytest.approx(-1.0, abs=1e-12)


# ----------------------------------------------- linearized squared range


def test_linearized_sq_distance_exact_at_reference():
    rng = np.random.default_rng(13)
    q = rng.uniform(-200, 200, size=(6, 2))
    center = rng.uniform(-100, 100, size=2)
    got = linearized_sq_distance(q, q, center)
    np.testing.assert_allclose(got, np.sum((q - center) ** 2, axis=1), rtol=1e-12)


def test_linearized_sq_distance_lower_bounds():
    rng = np.random.default_rng(17)
    for _ in range(200):
        q_ref = rng.uniform(-200, 200, size=(4, 2))
        q = rng.uniform(-200, 200, size=(4, 2))
        center = rng.uniform(-100, 100, size=2)
        lin = linearized_sq_distance(q, q_ref, center)
        true = np.sum((q - center) ** 2, axis=1)
        assert np.all(lin <= true + 1e-9)


def test_linearized_sq_distance_vanishes_at_center_reference():
    center = np.array([10.0, -5.0])
    q_ref = np.tile(center, (3, 1))
    q = np.array([[0.0, 0.0], [100.0, 50.0], [-30.0, 4.0]])
    np.testing.assert_allclose(linearized_sq_distance(q, q_ref, center), 0.0, atol=0)


def test_linearized_sq_distance_cvxpy_path_matches():
    rng = np.random.default_rng(19)
    q = rng.uniform(-50, 50, size=(5, 2))
    q_ref = rng.uniform(-50, 50, size=(5, 2))
    center = rng.uniform(-50, 50, size=2)
    expr = linearized_sq_distance(cp.Constant(q), q_ref, center)
    np.testing.assert_allclose(
        np.asarray(expr.value), linearized_sq_distance(q, q_ref, center), rtol=1e-12
    )


# ----------------------------------------------------- S-procedure matrix


def _lmi_value(q, center, radius, cap, lam, h, scale=None):
    mat = s_procedure_lmi(np.asarray(q, float), np.asarray(q, float),
                          np.asarray(center, float), radius, cap, lam, h, scale=scale)
    return np.asarray(mat.value)


def test_lmi_degenerate_point_above_center():
    # q at the center with zero radius: certifiable iff cap <= H^2.
    h = 100.0
    good = _lmi_value([5.0, 5.0], [5.0, 5.0], 0.0, h * h - 1.0, 0.0, h)
    bad = _lmi_value([5.0, 5.0], [5.0, 5.0], 0.0, h * h + 1.0, 0.0, h)
    assert np.linalg.eigvalsh(good).min() >= -1e-12
    assert np.linalg.eigvalsh(bad).min() < 0.0


def test_lmi_schur_equivalence():
    # With exact linearization (q = q_ref) and mult+1 > 0, PSD is equivalent
    # to the Schur condition (mult+1)(d^2 + H^2 - cap - mult r^2) >= ||q-c||^2.
    rng = np.random.default_rng(23)
    h = 100.0
    checked = 0
    for _ in range(400):
        q = rng.uniform(-200, 200, size=2)
        c = rng.uniform(-200, 200, size=2)
        r = float(rng.uniform(0.0, 80.0))
        lam = float(rng.uniform(0.0, 5.0))
        d2 = float(np.sum((q - c) ** 2))
        cap = float(rng.uniform(0.0, 2.0) * (d2 + h * h))
        lhs = (lam + 1.0) * (d2 + h * h - cap - lam * r * r)
        if abs(lhs - d2) <= 1e-6 * (d2 + h * h):
            continue  # skip draws too close to the PSD boundary
        mat = _lmi_value(q, c, r, cap, lam, h)
        assert (np.linalg.eigvalsh(mat).min() >= -1e-9) == (lhs >= d2)
        checked += 1
    assert checked > 300


def test_lmi_scale_is_congruence():
    rng = np.random.default_rng(29)
    h = 100.0
    for _ in range(50):
        q = rng.uniform(-200, 200, size=2)
        c = rng.uniform(-200, 200, size=2)
        r = float(rng.uniform(0.0, 50.0))
        lam = float(rng.uniform(0.0, 3.0))
        cap = float(rng.uniform(0.5, 1.5) * h * h)
        eigs = [
            np.linalg.eigvalsh(_lmi_value(q, c, r, cap, lam, h, scale=s)).min()
            for s in (1.0, None, 7.3)
        ]
        if min(abs(e) for e in eigs) > 1e-6:
            assert len({e >= 0 for e in eigs}) == 1


def test_lmi_argument_checks():
    q = np.zeros(2)
    with pytest.raises(ValueError, match="radius must be nonnegative"):
        s_procedure_lmi(q, q, q, -1.0, 0.0, 0.0, 100.0)
    with pytest.raises(ValueError, match="scale must be positive"):
        s_procedure_lmi(q, q, q, 1.0, 0.0, 0.0, 100.0, scale=0.0)


def _max_certifiable_cap(q, center, radius, h):
    """Solve max cap s.t. exists mult >= 0 with the LMI PSD (exact q)."""
    prog = ConicProgram()
    cap = prog.add_variable("cap")
    lam = prog.add_variable("lam", nonneg=True)
    mat = s_procedure_lmi(np.asarray(q, float), np.asarray(q, float),
                          np.asarray(center, float), radius, cap, lam, h)
    prog.add_psd3(mat, "probe")
    prog.add_objective(cap)
    prog.objective_scale = 1.0 / (h * h)
    status = prog.solve()
    assert status.kind == "optimal", status.raw_status
    return float(prog.value("cap"))


def test_lmi_solver_probes_recover_clamped_range():
    # The S-procedure is lossless for one ball constraint: the largest
    # certifiable squared range must equal (max(d - r, 0))^2 + H^2.
    rng = np.random.default_rng(31)
    h = 100.0
    cases = [
        ([120.0, 0.0], [0.0, 0.0], 30.0),   # node disk away from the platform
        ([10.0, 0.0], [0.0, 0.0], 30.0),    # platform over the disk
        ([120.0, 0.0], [0.0, 0.0], 0.0),    # degenerate point node
        ([0.0, 0.0], [0.0, 0.0], 25.0),     # directly above the center
    ]
    for _ in range(12):
        cases.append(
            (rng.uniform(-200, 200, size=2), rng.uniform(-200, 200, size=2),
             float(rng.uniform(0.0, 100.0)))
        )
    for q, center, radius in cases:
        got = _max_certifiable_cap(q, center, radius, h)
        d = float(np.linalg.norm(np.asarray(q, float) - np.asarray(center, float)))
        want = max(d - radius, 0.0) ** 2 + h * h
        assert got == pytest.approx(want, rel=1e-6)
        # Cross-check against the densely sampled disk.
        grid = disk_grid_points(center, radius, q)
        grid_min = float(
            np.min(np.sum((np.asarray(q, float) - grid) ** 2, axis=1)) + h * h
        )
        assert got <= grid_min * (1.0 + 1e-9)
        assert grid_min == pytest.approx(want, rel=1e-9)


# ------------------------------------------------------ subproblem census


def test_wcr_census(small_scenario, small_point):
    prog = build_wcr_subproblem(small_scenario, small_point)
    census = prog.census()
    n = small_scenario.n_slots
    nodes = small_scenario.n_eves + small_scenario.n_pus
    assert census["psd3_blocks"] == nodes * n
    fam = census["families"]
    assert fam["eve_robust"] == small_scenario.n_eves * n
    assert fam["pu_robust"] == small_scenario.n_pus * n
    assert fam["served_link"] == n
    assert fam["mobility"] == n - 1
    assert fam["min_power"] == n
    assert fam["interference_budget"] == small_scenario.n_pus
    assert census["soc_blocks_by_dim"][4] == n
    # dim-3 cones: mobility (n-1), three per inverse-product tower per node,
    # and the average-power reciprocal cone.
    assert census["soc_blocks_by_dim"][3] == (n - 1) + 3 * nodes * n + n
    assert census["log_terms"] == n
    assert "waypoints_interior" in prog.variables


def test_wcr_census_fixed_trajectory(small_scenario, small_point):
    prog = build_wcr_subproblem(small_scenario, small_point, fix_trajectory=True)
    census = prog.census()
    assert "mobility" not in census["families"]
    assert "waypoints_interior" not in prog.variables
    assert census["psd3_blocks"] == (
        (small_scenario.n_eves + small_scenario.n_pus) * small_scenario.n_slots
    )


def test_wcr_first_solve_is_optimal(small_scenario, small_point):
    prog = build_wcr_subproblem(small_scenario, small_point)
    status = prog.solve()
    assert status.kind == "optimal"
    assert status.objective is not None and math.isfinite(status.objective)


def test_wcr_refresh_matches_fresh_build(small_scenario, small_point):
    # Re-targeting the compiled program at a new point must give the same
    # optimum as building from scratch there.
    prog = build_wcr_subproblem(small_scenario, small_point)
    assert prog.solve().kind == "optimal"
    from uavsec.sca import _extract_point

    moved = _extract_point(prog, small_point)
    prog.refresh(moved)
    re_obj = prog.solve().objective
    fresh = build_wcr_subproblem(small_scenario, moved)
    fresh_obj = fresh.solve().objective
    assert re_obj == pytest.approx(fresh_obj, abs=1e-6)


# ------------------------------------------------------------- outer loop


def test_small_run_converges_and_certifies(small_scenario, small_wcr):
    solution, trace = small_wcr
    assert trace.converged
    assert trace.iterations >= 2
    assert audit_trace(trace).passed
    report = certify_worst_case(solution, small_scenario)
    assert report.passed, report.to_json()
    assert solution.model == "wcr"
    assert solution.converged
    assert solution.iterations == trace.iterations


def test_small_run_respects_physical_budgets(small_scenario, small_wcr):
    solution, _ = small_wcr
    q = np.asarray(solution.waypoints_m)
    p = np.asarray(solution.powers_w)
    assert q.shape == (small_scenario.n_slots, 2)
    # Endpoints are spliced constants, exact to the bit.
    assert np.array_equal(q[0], np.asarray(small_scenario.q_init_xy_m))
    assert np.array_equal(q[-1], np.asarray(small_scenario.q_final_xy_m))
    steps = np.linalg.norm(np.diff(q, axis=0), axis=1)
    assert np.all(steps <= small_scenario.v_max_mps * small_scenario.slot_s + 1e-9)
    assert p.mean() <= small_scenario.p_avg_w + 1e-9
    assert p.max() <= small_scenario.p_max_w + 1e-9
    assert p.min() > 0.0


def test_small_run_objective_matches_slacks(small_wcr):
    solution, _ = small_wcr
    alpha = np.asarray(solution.slacks["snr_plus_one"])
    phi = np.asarray(solution.slacks["eve_snr_cap"])
    assert solution.objective_bps_hz == pytest.approx(
        clamped_objective(alpha, phi), rel=1e-12
    )
    np.testing.assert_allclose(
        np.asarray(solution.slacks["eve_rate_cap"]), np.log2(phi + 1.0), rtol=1e-12
    )


def test_huge_epsilon_stops_after_two_iterations(small_scenario):
    solution, trace = run_algorithm1(small_scenario, epsilon=1e6)
    assert trace.iterations == 2
    assert trace.converged
    assert solution.objective_bps_hz >= 0.0


def test_fix_trajectory_pins_waypoints(small_scenario):
    initial = initial_iterate(small_scenario, model="bounded")
    solution, trace = run_algorithm1(small_scenario, initial=initial,
                                     fix_trajectory=True, epsilon=1e-3)
    assert np.array_equal(np.asarray(solution.waypoints_m), initial.waypoints_m)
    assert trace.converged


def test_run_sca_argument_guards(small_scenario, small_point):
    build = lambda pt: build_wcr_subproblem(small_scenario, pt)  # noqa: E731
    with pytest.raises(ValueError, match="epsilon must be nonnegative"):
        run_sca(small_point, build, epsilon=-1.0)
    with pytest.raises(ValueError, match="max_iters must be at least 1"):
        run_sca(small_point, build, max_iters=0)


def test_max_iters_cap(small_scenario, small_point):
    _, _, trace = run_sca(
        small_point,
        lambda pt: build_wcr_subproblem(small_scenario, pt),
        epsilon=0.0,
        max_iters=3,
    )
    assert trace.iterations == 3
    assert not trace.converged
