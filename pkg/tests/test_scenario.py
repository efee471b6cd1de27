"""Scenario data model: unit conversions, invariants, config parsing.

The config layer is the package's outer boundary, so these tests pin the
exact error behavior (unknown fields, unit-ambiguous spellings, missing
fields) as well as the happy path round-trips.
"""

from __future__ import annotations

import json
import math

import pytest
from hypothesis import given, settings, strategies as st

from uavsec import (
    ConfigError,
    InvariantError,
    Solution,
    UncertainNode,
    default_fixture,
    load_scenario,
)
from uavsec.outage import decouple_outage, matched_radius
from uavsec.scenario import (
    DEFAULT_BETA0,
    db_to_linear,
    dbm_to_watts,
    dbw_to_watts,
)


def _base_config(**overrides):
    """Minimal valid config; tests tweak single fields from here.

    Overriding a field with None removes it (used to swap unit variants).
    """
    cfg = {
        "su_xy_m": [0.0, 0.0],
        "altitude_m": 100.0,
        "noise_su_dbm": -50.0,
        "noise_eve_dbm": [-50.0],
        "p_avg_w": 0.1,
        "it_threshold_w": 2.5e-7,
        "v_max_mps": 10.0,
        "slot_s": 1.0,
        "n_slots": 4,
        "q_init_xy_m": [10.0, 0.0],
        "q_final_xy_m": [-10.0, 0.0],
        "rho": 0.2,
        "phi": 0.2,
        "eves": [
            {"center_xy_m": [50.0, 0.0], "bounded_radius_m": 5.0, "gaussian_std_m": 5.0}
        ],
    }
    cfg.update(overrides)
    return {k: v for k, v in cfg.items() if v is not None}


# ------------------------------------------------------------- unit helpers


def test_dbm_to_watts_reference_points():
    assert dbm_to_watts(-50.0) == pytest.approx(1e-8, rel=1e-12)
    assert dbm_to_watts(30.0) == pytest.approx(1.0, rel=1e-12)
    assert dbm_to_watts(0.0) == pytest.approx(1e-3, rel=1e-12)


def test_dbw_and_db_conversions():
    assert dbw_to_watts(0.0) == pytest.approx(1.0, rel=1e-12)
    assert dbw_to_watts(-10.0) == pytest.approx(0.1, rel=1e-12)
    assert db_to_linear(10.0) == pytest.approx(10.0, rel=1e-12)
    assert db_to_linear(-60.0) == pytest.approx(1e-6, rel=1e-12)


# ------------------------------------------------------------ the fixture


def test_default_fixture_headline_values():
    scn = default_fixture()
    assert scn.rho == 0.2
    assert scn.phi == 0.2
    assert scn.n_slots == 60
    assert scn.horizon_s == pytest.approx(60.0)
    assert scn.p_max_w / scn.p_avg_w == pytest.approx(4.0)
    assert scn.beta0 == pytest.approx(0.1)
    assert scn.noise_su_w == pytest.approx(1e-8, rel=1e-12)
    assert scn.n_eves == 2 and scn.n_pus == 1


def test_default_fixture_radii_match_gaussian_levels():
    """Bounded radii are the chance-matched values for the stds, making the
    two uncertainty models directly comparable."""
    scn = default_fixture()
    rho_split = decouple_outage(scn.rho, scn.n_eves)
    assert scn.pus[0].bounded_radius_m == pytest.approx(
        matched_radius(5.0, 1.0 - scn.phi)
    )
    assert scn.pus[0].bounded_radius_m == pytest.approx(8.9707, abs=1e-3)
    assert scn.eves[0].bounded_radius_m == pytest.approx(
        matched_radius(5.0, 1.0 - rho_split)
    )
    assert scn.eves[1].bounded_radius_m == pytest.approx(74.22, abs=1e-2)


def test_default_fixture_accepts_overrides():
    scn = default_fixture(p_avg_w=0.01, it_threshold_w=3e-8, n_slots=50)
    assert scn.p_avg_w == 0.01
    assert scn.p_max_w == pytest.approx(0.04)
    assert scn.it_threshold_w == 3e-8
    assert scn.n_slots == 50


# ---------------------------------------------------------------- invariants


@pytest.mark.parametrize(
    "changes, message",
    [
        ({"n_slots": 1}, "n_slots must be at least 2"),
        ({"altitude_m": 0.0}, "altitude_m must be finite and positive"),
        ({"p_avg_w": -1.0}, "p_avg_w must be finite and positive"),
        ({"p_max_w": 0.01}, "p_max_w must be at least p_avg_w"),
        ({"rho": 0.0}, "rho must lie in the open interval"),
        ({"phi": 1.0}, "phi must lie in the open interval"),
        ({"eves": (), "noise_eve_w": ()}, "at least one eavesdropper is required"),
        ({"noise_eve_w": (1e-8,)}, "noise_eve_w length must match"),
        ({"q_final_xy_m": (1e6, 0.0)}, "endpoints unreachable"),
    ],
)
def test_validate_names_the_failed_invariant(changes, message):
    with pytest.raises(InvariantError, match=message):
        default_fixture().replace(**changes)


def test_replace_revalidates_and_preserves_original():
    scn = default_fixture()
    out = scn.replace(p_avg_w=0.05, p_max_w=0.2)
    assert out.p_avg_w == 0.05
    assert scn.p_avg_w == 0.1  # frozen original untouched
    with pytest.raises(InvariantError):
        scn.replace(v_max_mps=-1.0)


def test_uncertain_node_validation():
    with pytest.raises(InvariantError, match="at least one of"):
        UncertainNode(center_xy_m=(0.0, 0.0)).validate("eves[0]")
    with pytest.raises(InvariantError, match="bounded_radius_m must be finite"):
        UncertainNode((0.0, 0.0), bounded_radius_m=-1.0).validate("pus[0]")
    with pytest.raises(InvariantError, match="center_xy_m entries must be finite"):
        UncertainNode((math.nan, 0.0), bounded_radius_m=1.0).validate("eves[1]")
    # Zero radius / zero std are valid degenerate uncertainty models.
    UncertainNode((0.0, 0.0), bounded_radius_m=0.0, gaussian_std_m=0.0).validate("ok")


def test_endpoint_reachability_is_checked_with_slack():
    # Exactly reachable endpoints (hop == v_max * slot * (n-1)) are accepted.
    scn = default_fixture().replace(
        n_slots=5, q_init_xy_m=(20.0, 0.0), q_final_xy_m=(-20.0, 0.0)
    )
    assert scn.n_slots == 5


# ------------------------------------------------------------ config parsing


def test_load_scenario_round_trips_through_json():
    scn = default_fixture()
    again = load_scenario(scn.to_json())
    assert again == scn
    assert again.to_config() == scn.to_config()


def test_load_scenario_accepts_parsed_dicts():
    scn = load_scenario(_base_config())
    assert scn.noise_su_w == pytest.approx(1e-8, rel=1e-12)
    assert scn.noise_eve_w[0] == pytest.approx(1e-8, rel=1e-12)
    assert scn.pus == ()  # primary users are optional
    assert scn.p_max_w == pytest.approx(0.4)  # defaults to 4x the average
    assert scn.beta0 == DEFAULT_BETA0


def test_unit_suffix_variants_convert():
    scn = load_scenario(_base_config(p_avg_w=None, p_avg_dbm=20.0))
    assert scn.p_avg_w == pytest.approx(0.1, rel=1e-12)
    scn = load_scenario(_base_config(noise_su_dbm=None, noise_su_dbw=-80.0))
    assert scn.noise_su_w == pytest.approx(1e-8, rel=1e-12)
    scn = load_scenario(_base_config(beta0_db=-10.0))
    assert scn.beta0 == pytest.approx(0.1, rel=1e-12)
    scn = load_scenario(
        _base_config(it_threshold_w=None, it_threshold_dbm=-36.0)
    )
    assert scn.it_threshold_w == pytest.approx(dbm_to_watts(-36.0), rel=1e-12)


def test_duplicate_unit_variants_are_ambiguous():
    cfg = _base_config(p_avg_dbm=20.0)  # p_avg_w already present
    with pytest.raises(ConfigError, match="unit ambiguity: give exactly one"):
        load_scenario(cfg)


def test_bare_spelling_gets_a_suffix_hint():
    cfg = _base_config()
    del cfg["p_avg_w"]
    cfg["p_avg"] = 0.1
    with pytest.raises(ConfigError, match="lacks a unit suffix.*p_avg_w"):
        load_scenario(cfg)


def test_unknown_field_rejected():
    with pytest.raises(ConfigError, match="unknown field 'wind_speed'"):
        load_scenario(_base_config(wind_speed=3.0))


def test_missing_required_field_named():
    cfg = _base_config()
    del cfg["rho"]
    with pytest.raises(ConfigError, match="missing required field 'rho'"):
        load_scenario(cfg)


@pytest.mark.parametrize("bad", [True, 4.0, "4"])
def test_n_slots_must_be_a_true_integer(bad):
    with pytest.raises(ConfigError, match="n_slots must be an integer"):
        load_scenario(_base_config(n_slots=bad))


def test_malformed_json_and_roots():
    with pytest.raises(ConfigError, match="not valid JSON"):
        load_scenario("{nope")
    with pytest.raises(ConfigError, match="root must be a JSON object"):
        load_scenario("[1, 2]")


def test_node_parsing_errors():
    with pytest.raises(ConfigError, match=r"eves\[0\]: unknown field"):
        load_scenario(_base_config(eves=[{"center_xy_m": [0, 0], "radius": 5}]))
    with pytest.raises(ConfigError, match="missing required field center_xy_m"):
        load_scenario(_base_config(eves=[{"bounded_radius_m": 5.0}]))
    with pytest.raises(ConfigError, match="must be a pair"):
        load_scenario(_base_config(su_xy_m=[1.0]))
    with pytest.raises(ConfigError, match="non-empty list"):
        load_scenario(_base_config(noise_eve_dbm=[]))


@settings(max_examples=100, deadline=None, derandomize=True, database=None)
@given(
    p_avg=st.floats(1e-4, 10.0),
    gamma=st.floats(1e-9, 1e-5),
    rho=st.floats(0.01, 0.99),
)
def test_serialization_round_trip_is_identity(p_avg, gamma, rho):
    scn = default_fixture(p_avg_w=p_avg, it_threshold_w=gamma).replace(rho=rho)
    assert load_scenario(json.loads(scn.to_json())) == scn


# --------------------------------------------------------------- solutions


def test_solution_json_round_trip():
    sol = Solution(
        model="wcr",
        objective_bps_hz=1.25,
        waypoints_m=[[0.0, 0.0], [1.0, 2.0]],
        powers_w=[0.1, 0.2],
        slacks={"eve_rate_cap": [0.5, 0.5]},
        iterations=7,
        converged=True,
    )
    again = Solution.from_json(sol.to_json())
    assert again == sol
    # Serialization is canonical: sorted keys, stable across repeats.
    assert sol.to_json() == Solution.from_json(sol.to_json()).to_json()


def test_scenario_json_is_deterministic():
    scn = default_fixture()
    assert scn.to_json() == scn.to_json()
    assert json.loads(scn.to_json())["n_slots"] == 60


def test_loader_applies_invariants_after_parsing():
    with pytest.raises(InvariantError, match="n_slots must be at least 2"):
        load_scenario(_base_config(n_slots=1))
