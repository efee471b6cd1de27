"""Command-line front end for the secrecy-rate planners.

Three subcommands:

- solve: run one scheme on one scenario, write solution.json / trace.csv /
  validation.json, and exit 0 only if the independent certifiers pass.
- sweep: rerun a scheme while varying flight time, average power, or the
  interference threshold; one CSV per scheme for plotting.
- compare: convergence traces of both robust schemes across three
  power/interference regimes, in one joint CSV.

Exit codes: 0 success, 2 configuration error, 3 infeasible scenario,
4 solver failure, 5 solution produced but certification failed.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import os
import sys
import tempfile
from pathlib import Path
from typing import Any, Sequence

from .baselines import InfeasibleScenario, fixed_trajectory, non_robust
from .outage import run_algorithm2
from .sca import (
    DEFAULT_EPSILON,
    DEFAULT_MAX_ITERS,
    InfeasibleSubproblem,
    SolveTrace,
    SubproblemFailure,
)
from .scenario import ConfigError, Scenario, Solution, UncertainNode, load_scenario
from .validation import (
    DEFAULT_OUTAGE_SAMPLES,
    audit_trace,
    certify_outage,
    certify_worst_case,
)
from .worst_case import run_algorithm1

__all__ = ["main", "run_scheme", "SCHEMES"]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_SOLVER = 4
EXIT_CERTIFICATION = 5

SCHEMES = ("wcr", "ocr", "nonrobust", "fixed1", "fixed2")
SWEEP_AXES = ("T", "p_avg", "it_threshold")

# The three regimes compared in the convergence experiment:
# (average power in W, interference threshold in W).
COMPARE_CASES = (
    ("case1", 0.1, 2.5e-7),
    ("case2", 0.01, 3e-8),
    ("case3", 0.01, 2.5e-7),
)


def run_scheme(
    scenario: Scenario,
    scheme: str,
    epsilon: float = DEFAULT_EPSILON,
    max_iters: int = DEFAULT_MAX_ITERS,
) -> tuple[Solution, SolveTrace]:
    """Dispatch one named scheme on a scenario."""
    if scheme == "wcr":
        return run_algorithm1(scenario, epsilon=epsilon, max_iters=max_iters)
    if scheme == "ocr":
        return run_algorithm2(scenario, epsilon=epsilon, max_iters=max_iters)
    if scheme == "nonrobust":
        return non_robust(scenario, epsilon=epsilon, max_iters=max_iters)
    if scheme == "fixed1":
        return fixed_trajectory(scenario, model="bounded", epsilon=epsilon,
                                max_iters=max_iters)
    if scheme == "fixed2":
        return fixed_trajectory(scenario, model="probabilistic", epsilon=epsilon,
                                max_iters=max_iters)
    raise ConfigError(f"unknown scheme {scheme!r}; choose one of {SCHEMES}")


def _zero_radius(scenario: Scenario) -> Scenario:
    """The certainty-equivalent scenario a non-robust plan implicitly assumes."""

    def zeroed(node: UncertainNode) -> UncertainNode:
        return UncertainNode(node.center_xy_m, 0.0, node.gaussian_std_m)

    return scenario.replace(
        pus=tuple(zeroed(n) for n in scenario.pus),
        eves=tuple(zeroed(n) for n in scenario.eves),
    )


def _certification(
    solution: Solution,
    trace: SolveTrace,
    scenario: Scenario,
    scheme: str,
    samples: int,
    seed: int,
) -> tuple[bool, str]:
    """Run the certifiers appropriate to the scheme; return (passed, json)."""
    reports = [audit_trace(trace)]
    if scheme in ("wcr", "fixed1"):
        reports.append(certify_worst_case(solution, scenario))
    elif scheme in ("ocr", "fixed2"):
        reports.append(certify_outage(solution, scenario, samples=samples, seed=seed))
    else:
        reports.append(certify_worst_case(solution, _zero_radius(scenario)))
    passed = all(r.passed for r in reports)
    payload = {
        "passed": passed,
        "reports": {r.kind: json.loads(r.to_json()) for r in reports},
    }
    return passed, json.dumps(payload, indent=2, sort_keys=True)


def _write_atomic(path: Path, text: str) -> None:
    if not text.endswith("\n"):
        text += "\n"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _apply_axis(scenario: Scenario, axis: str, value: float) -> Scenario:
    """Return the scenario with one swept quantity changed.

    T rescales the slot count at fixed slot length; p_avg moves the average
    power budget and scales the peak budget by the scenario's existing
    peak-to-average ratio; it_threshold moves the interference cap.
    """
    if axis == "T":
        n = int(round(value / scenario.slot_s))
        if abs(n * scenario.slot_s - value) > 1e-9 * max(1.0, abs(value)):
            raise ConfigError(
                f"flight time {value} is not a whole number of {scenario.slot_s} s slots"
            )
        return scenario.replace(n_slots=n)
    if axis == "p_avg":
        ratio = scenario.p_max_w / scenario.p_avg_w
        return scenario.replace(p_avg_w=value, p_max_w=ratio * value)
    if axis == "it_threshold":
        return scenario.replace(it_threshold_w=value)
    raise ConfigError(f"unknown sweep axis {axis!r}; choose one of {SWEEP_AXES}")


def _load(config_path: str) -> Scenario:
    try:
        raw = Path(config_path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {config_path!r}: {exc}") from exc
    return load_scenario(raw)


# ------------------------------------------------------------- solve


def _cmd_solve(args: argparse.Namespace) -> int:
    scenario = _load(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    solution, trace = run_scheme(scenario, args.model, epsilon=args.eps,
                                 max_iters=args.max_iters)
    passed, validation_json = _certification(
        solution, trace, scenario, args.model, samples=args.samples, seed=args.seed
    )
    _write_atomic(out / "solution.json", solution.to_json())
    _write_atomic(out / "trace.csv", trace.to_csv())
    _write_atomic(out / "validation.json", validation_json)
    print(
        f"model={args.model} objective_bps_hz={solution.objective_bps_hz:.9g} "
        f"iterations={trace.iterations} converged={trace.converged} "
        f"certified={'yes' if passed else 'NO'}"
    )
    print(f"wrote {out / 'solution.json'}, {out / 'trace.csv'}, {out / 'validation.json'}")
    return EXIT_OK if passed else EXIT_CERTIFICATION


# ------------------------------------------------------------- sweep


def _sweep_worker(task: tuple[dict[str, Any], str, str, float, float, int]) -> tuple[str, float, float, float, int]:
    config, scheme, axis, value, epsilon, max_iters = task
    scenario = _apply_axis(load_scenario(config), axis, value)
    solution, trace = run_scheme(scenario, scheme, epsilon=epsilon, max_iters=max_iters)
    wall_s = sum(rec.wall_ms for rec in trace.records) / 1000.0
    return scheme, value, solution.objective_bps_hz, wall_s, trace.iterations


def _cmd_sweep(args: argparse.Namespace) -> int:
    scenario = _load(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    config = scenario.to_config()
    tasks = [
        (config, scheme, args.vary, value, args.eps, args.max_iters)
        for scheme in args.schemes
        for value in args.values
    ]
    if args.jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_sweep_worker, tasks))
    else:
        results = [_sweep_worker(t) for t in tasks]

    by_scheme: dict[str, list[tuple[float, float, float, int]]] = {s: [] for s in args.schemes}
    for scheme, value, objective, wall_s, iterations in results:
        by_scheme[scheme].append((value, objective, wall_s, iterations))
    for scheme, rows in by_scheme.items():
        lines = ["value,avg_secrecy_rate_bps_hz,wall_s,iterations"]
        lines += [f"{v:.9g},{obj:.9g},{w:.9g},{it}" for v, obj, w, it in rows]
        path = out / f"sweep_{scheme}.csv"
        _write_atomic(path, "\n".join(lines))
        print(f"wrote {path} ({len(rows)} points)")
    return EXIT_OK


# ------------------------------------------------------------- compare


def _compare_worker(task: tuple[dict[str, Any], str, str, float, float, float, int]):
    config, scheme, case, p_avg_w, it_threshold_w, epsilon, max_iters = task
    base = load_scenario(config)
    ratio = base.p_max_w / base.p_avg_w
    scenario = base.replace(p_avg_w=p_avg_w, p_max_w=ratio * p_avg_w,
                            it_threshold_w=it_threshold_w)
    _, trace = run_scheme(scenario, scheme, epsilon=epsilon, max_iters=max_iters)
    return scheme, case, p_avg_w, it_threshold_w, trace


def _cmd_compare(args: argparse.Namespace) -> int:
    scenario = _load(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    config = scenario.to_config()
    tasks = [
        (config, scheme, case, p_avg_w, it_w, args.eps, args.max_iters)
        for scheme in ("wcr", "ocr")
        for case, p_avg_w, it_w in COMPARE_CASES
    ]
    if args.jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_compare_worker, tasks))
    else:
        results = [_compare_worker(t) for t in tasks]

    lines = ["scheme,case,p_avg_w,it_threshold_w,iteration,objective_bps_hz"]
    for scheme, case, p_avg_w, it_w, trace in results:
        for rec in trace.records:
            lines.append(
                f"{scheme},{case},{p_avg_w:.9g},{it_w:.9g},{rec.iteration},{rec.objective:.9g}"
            )
        print(
            f"{scheme} {case}: objective_bps_hz={trace.objectives[-1]:.9g} "
            f"iterations={trace.iterations}"
        )
    path = out / "convergence.csv"
    _write_atomic(path, "\n".join(lines))
    print(f"wrote {path}")
    return EXIT_OK


# ------------------------------------------------------------- entry point


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="uavsec",
        description="Robust secrecy-rate trajectory and power planning for a UAV relay.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("config", help="path to a scenario config (JSON)")
        p.add_argument("--out", default=".", help="output directory (default: .)")
        p.add_argument("--eps", type=float, default=DEFAULT_EPSILON,
                       help="SCA convergence threshold on the objective")
        p.add_argument("--max-iters", type=int, default=DEFAULT_MAX_ITERS,
                       help="SCA iteration cap")

    p_solve = sub.add_parser("solve", help="solve one scenario with one scheme")
    common(p_solve)
    p_solve.add_argument("--model", choices=SCHEMES, default="wcr",
                         help="planning scheme (default: wcr)")
    p_solve.add_argument("--seed", type=int, default=0,
                         help="RNG seed for the Monte-Carlo certifier")
    p_solve.add_argument("--samples", type=int, default=DEFAULT_OUTAGE_SAMPLES,
                         help="Monte-Carlo sample count for outage certification")
    p_solve.set_defaults(func=_cmd_solve)

    p_sweep = sub.add_parser("sweep", help="sweep one scenario quantity")
    common(p_sweep)
    p_sweep.add_argument("--vary", choices=SWEEP_AXES, required=True,
                         help="swept quantity: T (s), p_avg (W), it_threshold (W)")
    p_sweep.add_argument("--values", type=float, nargs="+", required=True,
                         help="values of the swept quantity")
    p_sweep.add_argument("--schemes", nargs="+", choices=SCHEMES,
                         default=["wcr", "ocr"], help="schemes to run per value")
    p_sweep.add_argument("--jobs", type=int, default=1,
                         help="worker processes for sweep points")
    p_sweep.set_defaults(func=_cmd_sweep)

    p_cmp = sub.add_parser(
        "compare",
        help="convergence of both robust schemes across three power/interference regimes",
    )
    common(p_cmp)
    p_cmp.add_argument("--jobs", type=int, default=1,
                       help="worker processes for the six runs")
    p_cmp.set_defaults(func=_cmd_compare)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InfeasibleScenario, InfeasibleSubproblem) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (SubproblemFailure,) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
