"""Problem data: geometry, power budgets, uncertainty models, and config I/O.

A scenario bundles everything the planners need: the secondary user the UAV
serves, primary users it must not disturb, eavesdroppers it must outrun, per
slot kinematics, and the power/interference budgets.  Node locations are known
only through a nominal center plus either a bounded error radius (worst-case
model) or a Gaussian error standard deviation (outage model); a node may carry
both so the two designs can be compared on identical data.

Config files are JSON with unit-suffixed field names (``_m``, ``_w``, ``_dbm``,
``_dbw``, ``_s``, ``_mps``).  Every power-like quantity accepts exactly one
representation; anything else is rejected with an error naming the field.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Any

__all__ = [
    "ConfigError",
    "InvariantError",
    "UncertainNode",
    "Scenario",
    "Solution",
    "load_scenario",
    "default_fixture",
    "dbm_to_watts",
    "dbw_to_watts",
    "db_to_linear",
]


class ConfigError(ValueError):
    """Raised for malformed config text, unknown fields, or unit ambiguity."""


class InvariantError(ValueError):
    """Raised when scenario data violates a named invariant."""


def dbm_to_watts(x_dbm: float) -> float:
    return 10.0 ** ((x_dbm - 30.0) / 10.0)


def dbw_to_watts(x_dbw: float) -> float:
    return 10.0 ** (x_dbw / 10.0)


def db_to_linear(x_db: float) -> float:
    return 10.0 ** (x_db / 10.0)


@dataclass(frozen=True)
class UncertainNode:
    """A ground node whose true position is only approximately known.

    center_xy_m is the nominal (estimated) position.  bounded_radius_m bounds
    the estimation error norm for the worst-case design; gaussian_std_m is the
    per-axis standard deviation of a circular Gaussian error for the outage
    design.  Either may be None when that model is not in use.
    """

    center_xy_m: tuple[float, float]
    bounded_radius_m: float | None = None
    gaussian_std_m: float | None = None

    def validate(self, label: str) -> None:
        if len(self.center_xy_m) != 2:
            raise InvariantError(f"{label}: center_xy_m must have two entries")
        if not all(math.isfinite(c) for c in self.center_xy_m):
            raise InvariantError(f"{label}: center_xy_m entries must be finite")
        for name, value in (
            ("bounded_radius_m", self.bounded_radius_m),
            ("gaussian_std_m", self.gaussian_std_m),
        ):
            if value is not None and (not math.isfinite(value) or value < 0):
                raise InvariantError(f"{label}: {name} must be finite and nonnegative")
        if self.bounded_radius_m is None and self.gaussian_std_m is None:
            raise InvariantError(
                f"{label}: at least one of bounded_radius_m / gaussian_std_m must be set"
            )


@dataclass(frozen=True)
class Scenario:
    """Immutable problem instance shared by all planners and certifiers."""

    su_xy_m: tuple[float, float]
    altitude_m: float
    beta0: float
    noise_su_w: float
    noise_eve_w: tuple[float, ...]
    p_avg_w: float
    p_max_w: float
    it_threshold_w: float
    v_max_mps: float
    slot_s: float
    n_slots: int
    q_init_xy_m: tuple[float, float]
    q_final_xy_m: tuple[float, float]
    rho: float
    phi: float
    pus: tuple[UncertainNode, ...]
    eves: tuple[UncertainNode, ...]

    @property
    def n_eves(self) -> int:
        return len(self.eves)

    @property
    def n_pus(self) -> int:
        return len(self.pus)

    @property
    def horizon_s(self) -> float:
        return self.n_slots * self.slot_s

    def validate(self) -> None:
        """Check every scenario invariant; raise InvariantError naming the first failure."""
        if self.n_slots < 2:
            raise InvariantError("n_slots must be at least 2")
        for name in (
            "altitude_m",
            "beta0",
            "noise_su_w",
            "p_avg_w",
            "p_max_w",
            "it_threshold_w",
            "v_max_mps",
            "slot_s",
        ):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise InvariantError(f"{name} must be finite and positive")
        if self.p_max_w < self.p_avg_w:
            raise InvariantError("p_max_w must be at least p_avg_w")
        for prob_name in ("rho", "phi"):
            value = getattr(self, prob_name)
            if not (0.0 < value < 1.0):
                raise InvariantError(f"{prob_name} must lie in the open interval (0, 1)")
        if len(self.eves) == 0:
            raise InvariantError("at least one eavesdropper is required")
        if len(self.noise_eve_w) != len(self.eves):
            raise InvariantError("noise_eve_w length must match the number of eavesdroppers")
        for idx, value in enumerate(self.noise_eve_w):
            if not (math.isfinite(value) and value > 0):
                raise InvariantError(f"noise_eve_w[{idx}] must be finite and positive")
        for pair_name in ("su_xy_m", "q_init_xy_m", "q_final_xy_m"):
            pair = getattr(self, pair_name)
            if len(pair) != 2 or not all(math.isfinite(c) for c in pair):
                raise InvariantError(f"{pair_name} must be two finite coordinates")
        hop = math.dist(self.q_init_xy_m, self.q_final_xy_m)
        budget = self.v_max_mps * self.slot_s * (self.n_slots - 1)
        if hop > budget + 1e-9:
            raise InvariantError(
                "endpoints unreachable: ||q_final - q_init|| exceeds v_max * slot * (n_slots - 1)"
            )
        for i, node in enumerate(self.pus):
            node.validate(f"pus[{i}]")
        for i, node in enumerate(self.eves):
            node.validate(f"eves[{i}]")

    def replace(self, **changes: Any) -> "Scenario":
        out = replace(self, **changes)
        out.validate()
        return out

    def to_config(self) -> dict[str, Any]:
        """Canonical config dict (linear units only); inverse of load_scenario."""

        def node_dict(node: UncertainNode) -> dict[str, Any]:
            out: dict[str, Any] = {"center_xy_m": list(node.center_xy_m)}
            if node.bounded_radius_m is not None:
                out["bounded_radius_m"] = node.bounded_radius_m
            if node.gaussian_std_m is not None:
                out["gaussian_std_m"] = node.gaussian_std_m
            return out

        return {
            "su_xy_m": list(self.su_xy_m),
            "altitude_m": self.altitude_m,
            "beta0": self.beta0,
            "noise_su_w": self.noise_su_w,
            "noise_eve_w": list(self.noise_eve_w),
            "p_avg_w": self.p_avg_w,
            "p_max_w": self.p_max_w,
            "it_threshold_w": self.it_threshold_w,
            "v_max_mps": self.v_max_mps,
            "slot_s": self.slot_s,
            "n_slots": self.n_slots,
            "q_init_xy_m": list(self.q_init_xy_m),
            "q_final_xy_m": list(self.q_final_xy_m),
            "rho": self.rho,
            "phi": self.phi,
            "pus": [node_dict(n) for n in self.pus],
            "eves": [node_dict(n) for n in self.eves],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_config(), indent=2, sort_keys=True)


@dataclass
class Solution:
    """Planner output: trajectory, per-slot powers, and all model slacks.

    slacks maps descriptive names to lists/nested lists (JSON-friendly), e.g.
    "snr_plus_one" for the served-link SNR lower bounds and "interference_cap_w"
    for the per-PU per-slot interference budget split, both needed by the
    certifiers.  objective_bps_hz is the claimed average secrecy rate.
    """

    model: str
    objective_bps_hz: float
    waypoints_m: list[list[float]]
    powers_w: list[float]
    slacks: dict[str, Any] = field(default_factory=dict)
    iterations: int = 0
    converged: bool = False

    def to_json(self) -> str:
        payload = {
            "model": self.model,
            "objective_bps_hz": self.objective_bps_hz,
            "waypoints_m": self.waypoints_m,
            "powers_w": self.powers_w,
            "slacks": self.slacks,
            "iterations": self.iterations,
            "converged": self.converged,
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "Solution":
        raw = json.loads(text)
        return Solution(
            model=raw["model"],
            objective_bps_hz=raw["objective_bps_hz"],
            waypoints_m=raw["waypoints_m"],
            powers_w=raw["powers_w"],
            slacks=raw.get("slacks", {}),
            iterations=raw.get("iterations", 0),
            converged=raw.get("converged", False),
        )


# Config parsing.  Each entry: canonical field -> accepted suffix variants and
# the conversion applied to each.  Exactly one variant may appear.
_POWER_VARIANTS: dict[str, dict[str, Any]] = {
    "beta0": {"beta0": None, "beta0_db": db_to_linear},
    "noise_su_w": {"noise_su_w": None, "noise_su_dbm": dbm_to_watts, "noise_su_dbw": dbw_to_watts},
    "noise_eve_w": {"noise_eve_w": None, "noise_eve_dbm": dbm_to_watts, "noise_eve_dbw": dbw_to_watts},
    "p_avg_w": {"p_avg_w": None, "p_avg_dbm": dbm_to_watts, "p_avg_dbw": dbw_to_watts},
    "p_max_w": {"p_max_w": None, "p_max_dbm": dbm_to_watts, "p_max_dbw": dbw_to_watts},
    "it_threshold_w": {
        "it_threshold_w": None,
        "it_threshold_dbm": dbm_to_watts,
        "it_threshold_dbw": dbw_to_watts,
    },
}

_PLAIN_FIELDS = (
    "su_xy_m",
    "altitude_m",
    "v_max_mps",
    "slot_s",
    "n_slots",
    "q_init_xy_m",
    "q_final_xy_m",
    "rho",
    "phi",
    "pus",
    "eves",
)

# Default reference channel gain at 1 m when the config omits beta0: -60 dB.
DEFAULT_BETA0 = 1e-6

_KNOWN_KEYS = set(_PLAIN_FIELDS) | {k for v in _POWER_VARIANTS.values() for k in v}

# Bare (suffix-less) spellings users plausibly try; map to a helpful error.
_SUFFIX_HINTS = {
    "altitude": "altitude_m",
    "noise_su": "noise_su_w / noise_su_dbm / noise_su_dbw",
    "noise_eve": "noise_eve_w / noise_eve_dbm / noise_eve_dbw",
    "p_avg": "p_avg_w / p_avg_dbm / p_avg_dbw",
    "p_max": "p_max_w / p_max_dbm / p_max_dbw",
    "it_threshold": "it_threshold_w / it_threshold_dbm / it_threshold_dbw",
    "v_max": "v_max_mps",
    "slot": "slot_s",
    "su_xy": "su_xy_m",
    "q_init_xy": "q_init_xy_m",
    "q_final_xy": "q_final_xy_m",
}


def _as_number(raw: Any, key: str) -> float:
    if isinstance(raw, bool) or not isinstance(raw, (int, float)):
        raise ConfigError(f"field {key} must be a number")
    return float(raw)


def _as_pair(raw: Any, key: str) -> tuple[float, float]:
    if not isinstance(raw, (list, tuple)) or len(raw) != 2:
        raise ConfigError(f"field {key} must be a pair [x, y]")
    return (_as_number(raw[0], key), _as_number(raw[1], key))


def _node_from_dict(raw: Any, label: str) -> UncertainNode:
    if not isinstance(raw, dict):
        raise ConfigError(f"{label} must be an object")
    allowed = {"center_xy_m", "bounded_radius_m", "gaussian_std_m"}
    unknown = set(raw) - allowed
    if unknown:
        raise ConfigError(f"{label}: unknown field {sorted(unknown)[0]!r}")
    if "center_xy_m" not in raw:
        raise ConfigError(f"{label}: missing required field center_xy_m")
    return UncertainNode(
        center_xy_m=_as_pair(raw["center_xy_m"], f"{label}.center_xy_m"),
        bounded_radius_m=(
            _as_number(raw["bounded_radius_m"], f"{label}.bounded_radius_m")
            if "bounded_radius_m" in raw
            else None
        ),
        gaussian_std_m=(
            _as_number(raw["gaussian_std_m"], f"{label}.gaussian_std_m")
            if "gaussian_std_m" in raw
            else None
        ),
    )


def load_scenario(source: str | dict[str, Any]) -> Scenario:
    """Parse and validate a scenario config (JSON text or an already-parsed dict).

    Raises ConfigError for malformed input, unknown fields, or ambiguous units,
    and InvariantError (naming the invariant) for inconsistent values.
    """
    if isinstance(source, str):
        try:
            raw = json.loads(source)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
    else:
        raw = dict(source)
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")

    for key in raw:
        if key in _KNOWN_KEYS:
            continue
        if key in _SUFFIX_HINTS:
            raise ConfigError(
                f"unit ambiguity: field {key!r} lacks a unit suffix; use {_SUFFIX_HINTS[key]}"
            )
        raise ConfigError(f"unknown field {key!r}")

    values: dict[str, Any] = {}
    for canonical, variants in _POWER_VARIANTS.items():
        present = [k for k in variants if k in raw]
        if len(present) > 1:
            raise ConfigError(
                f"unit ambiguity: give exactly one of {sorted(variants)} (found {sorted(present)})"
            )
        if not present:
            continue
        key = present[0]
        convert = variants[key]
        payload = raw[key]
        if canonical == "noise_eve_w":
            if not isinstance(payload, list) or not payload:
                raise ConfigError(f"field {key} must be a non-empty list")
            entries = [_as_number(v, key) for v in payload]
            values[canonical] = tuple(convert(v) for v in entries) if convert else tuple(entries)
        else:
            number = _as_number(payload, key)
            values[canonical] = convert(number) if convert else number

    required = ("su_xy_m", "altitude_m", "v_max_mps", "slot_s", "n_slots",
                "q_init_xy_m", "q_final_xy_m", "rho", "phi", "eves",
                "noise_su_w", "noise_eve_w", "p_avg_w", "it_threshold_w")
    for name in required:
        if name not in raw and name not in values:
            raise ConfigError(f"missing required field {name!r} (or a unit variant of it)")

    n_slots_raw = raw["n_slots"]
    if isinstance(n_slots_raw, bool) or not isinstance(n_slots_raw, int):
        raise ConfigError("field n_slots must be an integer")

    pus_raw = raw.get("pus", [])
    eves_raw = raw["eves"]
    if not isinstance(pus_raw, list) or not isinstance(eves_raw, list):
        raise ConfigError("fields pus and eves must be lists of node objects")

    scenario = Scenario(
        su_xy_m=_as_pair(raw["su_xy_m"], "su_xy_m"),
        altitude_m=_as_number(raw["altitude_m"], "altitude_m"),
        beta0=values.get("beta0", DEFAULT_BETA0),
        noise_su_w=values["noise_su_w"],
        noise_eve_w=values["noise_eve_w"],
        p_avg_w=values["p_avg_w"],
        p_max_w=values.get("p_max_w", 4.0 * values["p_avg_w"]),
        it_threshold_w=values["it_threshold_w"],
        v_max_mps=_as_number(raw["v_max_mps"], "v_max_mps"),
        slot_s=_as_number(raw["slot_s"], "slot_s"),
        n_slots=n_slots_raw,
        q_init_xy_m=_as_pair(raw["q_init_xy_m"], "q_init_xy_m"),
        q_final_xy_m=_as_pair(raw["q_final_xy_m"], "q_final_xy_m"),
        rho=_as_number(raw["rho"], "rho"),
        phi=_as_number(raw["phi"], "phi"),
        pus=tuple(_node_from_dict(n, f"pus[{i}]") for i, n in enumerate(pus_raw)),
        eves=tuple(_node_from_dict(n, f"eves[{i}]") for i, n in enumerate(eves_raw)),
    )
    scenario.validate()
    return scenario


def default_fixture(
    p_avg_w: float = 0.1,
    it_threshold_w: float = 2.5e-7,
    n_slots: int = 60,
) -> Scenario:
    """Reference instance used throughout the tests and demos.

    One protected primary user, two eavesdroppers with very different location
    accuracy, 100 m altitude, 1 s slots, peak power 4x the average.  Bounded
    radii are the chance-matched values for the Gaussian standard deviations,
    so the worst-case and outage designs are immediately comparable.
    """
    from .outage import decouple_outage, matched_radius

    rho = 0.2
    phi = 0.2
    eve_stds = (5.0, 35.0)
    pu_std = 5.0
    rho_split = decouple_outage(rho, len(eve_stds))
    scenario = Scenario(
        su_xy_m=(0.0, 0.0),
        altitude_m=100.0,
        beta0=0.1,
        noise_su_w=dbm_to_watts(-50.0),
        noise_eve_w=(dbm_to_watts(-50.0), dbm_to_watts(-50.0)),
        p_avg_w=p_avg_w,
        p_max_w=4.0 * p_avg_w,
        it_threshold_w=it_threshold_w,
        v_max_mps=10.0,
        slot_s=1.0,
        n_slots=n_slots,
        q_init_xy_m=(200.0, 0.0),
        q_final_xy_m=(-200.0, 0.0),
        rho=rho,
        phi=phi,
        pus=(
            UncertainNode(
                center_xy_m=(-40.0, -80.0),
                bounded_radius_m=matched_radius(pu_std, 1.0 - phi),
                gaussian_std_m=pu_std,
            ),
        ),
        eves=tuple(
            UncertainNode(
                center_xy_m=center,
                bounded_radius_m=matched_radius(std, 1.0 - rho_split),
                gaussian_std_m=std,
            )
            for center, std in zip(((240.0, -120.0), (-240.0, 120.0)), eve_stds)
        ),
    )
    scenario.validate()
    return scenario
