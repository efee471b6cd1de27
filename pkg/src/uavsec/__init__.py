"""Robust joint trajectory and transmit-power planning for a UAV that relays
to a ground user while keeping eavesdroppers uninformed and primary users
undisturbed, under bounded or Gaussian node-location uncertainty."""

from .scenario import (
    ConfigError,
    InvariantError,
    Scenario,
    Solution,
    UncertainNode,
    default_fixture,
    load_scenario,
)
from .channels import (
    average_secrecy_rate,
    channel_gain,
    link_rate,
    worst_case_gain,
    worst_case_interference,
)
from .conic import ConicProgram, ConicModelError, SolverStatus, TOL_FEAS, TOL_GAP
from .sca import (
    ExpansionPoint,
    InfeasibleSubproblem,
    SolveTrace,
    SubproblemFailure,
)
from .worst_case import build_wcr_subproblem, run_algorithm1, s_procedure_lmi
from .outage import (
    bernstein_certified_range2,
    build_ocr_subproblem,
    decouple_outage,
    matched_radius,
    run_algorithm2,
)
from .baselines import (
    InfeasibleScenario,
    fixed_trajectory,
    fly_hover_fly_path,
    initial_iterate,
    non_robust,
)
from .validation import (
    ValidationReport,
    audit_trace,
    certify_outage,
    certify_worst_case,
    check_hessian_psd,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "InvariantError",
    "Scenario",
    "Solution",
    "UncertainNode",
    "default_fixture",
    "load_scenario",
    "average_secrecy_rate",
    "channel_gain",
    "link_rate",
    "worst_case_gain",
    "worst_case_interference",
    "ConicProgram",
    "ConicModelError",
    "SolverStatus",
    "TOL_FEAS",
    "TOL_GAP",
    "ExpansionPoint",
    "InfeasibleSubproblem",
    "SolveTrace",
    "SubproblemFailure",
    "build_wcr_subproblem",
    "run_algorithm1",
    "s_procedure_lmi",
    "bernstein_certified_range2",
    "build_ocr_subproblem",
    "decouple_outage",
    "matched_radius",
    "run_algorithm2",
    "InfeasibleScenario",
    "fixed_trajectory",
    "fly_hover_fly_path",
    "initial_iterate",
    "non_robust",
    "ValidationReport",
    "audit_trace",
    "certify_outage",
    "certify_worst_case",
    "check_hessian_psd",
]
