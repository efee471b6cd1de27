"""A small conic-program IR on top of CVXPY with block-level bookkeeping.

The planners need more than "hand constraints to a solver": the tests census
cone blocks by kind and dimension, the certifiers need named variable values,
and the reformulation helpers (inverse-product bounds, reciprocal sums) must
be independently checkable.  ConicProgram records every block it emits with
its semantic dimension, then compiles to CVXPY and solves with Clarabel
(interior-point; handles the exponential, second-order, and PSD cones used
here), falling back to SCS on numerical failure.

Sign conventions: the objective is MAXIMIZED and equals the affine part plus
sum(weight * log2(var)) over registered log terms.
"""

from __future__ import annotations

import json
import math
import os
import time
import warnings
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np
import cvxpy as cp

__all__ = [
    "TOL_FEAS",
    "TOL_GAP",
    "ConicModelError",
    "SolverStatus",
    "ConicProgram",
]

# Contract tolerances: primal feasibility (absolute) and relative optimality gap
# a status kind of "optimal" promises.
TOL_FEAS = 1e-7
TOL_GAP = 1e-7

_CLARABEL_OPTS = {"tol_gap_abs": 1e-8, "tol_gap_rel": 1e-8, "tol_feas": 1e-8}
_SCS_OPTS = {"eps": 1e-7, "max_iters": 50_000}

_STATUS_KINDS = ("optimal", "infeasible", "unbounded", "numerical_failure", "iteration_limit")


class ConicModelError(ValueError):
    """Raised when a program is assembled in a way that breaks IR invariants."""


@dataclass
class SolverStatus:
    """Outcome of one solve: status kind, optimal value, and diagnostics."""

    kind: str
    objective: float | None
    solver: str
    raw_status: str
    wall_s: float
    duals: dict[str, Any] | None = None

    @property
    def has_solution(self) -> bool:
        return self.kind in ("optimal", "iteration_limit") and self.objective is not None


@dataclass
class SocBlock:
    constraint: Any
    dim: int
    count: int
    family: str
    kind: str = "soc"  # "soc" or "rotated"


@dataclass
class PsdBlock:
    constraint: Any
    family: str


@dataclass
class LinearBlock:
    constraint: Any
    rows: int
    family: str


class ConicProgram:
    """Conic program in standard block form: affine objective + log terms,
    linear constraints, SOC blocks, and 3x3 PSD blocks.

    Programs may declare named parameters (add_parameter); constraints built
    from them are canonicalized once and re-solved after set_parameter updates,
    which is what makes the outer planning loops cheap -- each successive
    subproblem differs from the last only in linearization coefficients.  A
    builder that supports this attaches a `refresh(point)` callable.
    """

    def __init__(self, name: str = "") -> None:
        self.name = name
        self.variables: dict[str, cp.Variable] = {}
        self.parameters: dict[str, cp.Parameter] = {}
        self.linear_constraints: list[LinearBlock] = []
        self.soc_blocks: list[SocBlock] = []
        self.psd_blocks: list[PsdBlock] = []
        self.log_terms: list[tuple[float, cp.Variable, str]] = []
        # The backend's gap/feasibility termination mixes absolute and relative
        # tests; an objective whose cost vector is ~1e-2 (a per-slot average)
        # passes them while still far from optimum.  Builders set this so the
        # solver sees the objective multiplied by it; reported objectives are
        # divided back.  Values placing max|c| anywhere in ~[1e2, 1e4] land on
        # the same optimum to ~1e-6.
        self.objective_scale: float = 1.0
        self.refresh: Callable[..., None] | None = None
        self._objective_terms: list[Any] = []
        self._lower_bounds: dict[str, float] = {}
        self._aux_counter = 0
        self._problem: cp.Problem | None = None

    # ------------------------------------------------------------------ setup

    def _check_mutable(self) -> None:
        if self._problem is not None:
            raise ConicModelError(
                "program already compiled; structural changes after the first "
                "solve are not applied (update parameters instead)"
            )

    def add_variable(self, name: str, shape: int | tuple[int, ...] = (), *,
                     nonneg: bool = False, lower: float | None = None) -> cp.Variable:
        self._check_mutable()
        if name in self.variables:
            raise ConicModelError(f"variable {name!r} already declared")
        var = cp.Variable(shape, name=name, nonneg=nonneg)
        self.variables[name] = var
        if nonneg:
            self._lower_bounds[name] = max(0.0, self._lower_bounds.get(name, 0.0))
        if lower is not None:
            self.add_linear(var >= lower, family=f"{name}_lower_bound")
            self._lower_bounds[name] = max(lower, self._lower_bounds.get(name, -math.inf))
        return var

    def add_parameter(self, name: str, shape: int | tuple[int, ...] = ()) -> cp.Parameter:
        self._check_mutable()
        if name in self.parameters:
            raise ConicModelError(f"parameter {name!r} already declared")
        par = cp.Parameter(shape, name=name)
        self.parameters[name] = par
        return par

    def set_parameter(self, name: str, value: Any) -> None:
        if name not in self.parameters:
            raise ConicModelError(f"unknown parameter {name!r}")
        par = self.parameters[name]
        arr = np.asarray(value, dtype=float)
        if arr.shape != par.shape:
            raise ConicModelError(
                f"parameter {name!r} has shape {par.shape}, got {arr.shape}"
            )
        par.value = arr if par.shape else float(arr)

    def _aux(self, stem: str, shape: int | tuple[int, ...] = (), *, nonneg: bool = True) -> cp.Variable:
        self._aux_counter += 1
        return self.add_variable(f"_{stem}_{self._aux_counter}", shape, nonneg=nonneg)

    def add_objective(self, affine_expr: Any) -> None:
        self._check_mutable()
        expr = cp.Constant(affine_expr) if np.isscalar(affine_expr) else affine_expr
        if hasattr(expr, "is_affine") and not expr.is_affine():
            raise ConicModelError("objective terms must be affine (log terms go via add_log_objective)")
        self._objective_terms.append(expr)

    def add_log_objective(self, weight: float, var: cp.Variable, ref: Any = None,
                          trust_factor: float = 4.0, segments: int = 16) -> None:
        """Add weight * sum(log2(var)) to the objective.  The variable must carry
        a declared strictly positive lower bound so the log stays in-domain.

        With ref=None the log compiles to exponential cones.  Passing ref (the
        expansion-point value of var) instead replaces each log with its secant
        under-approximation on the trust interval [ref/trust_factor,
        ref*trust_factor]: the chords of a concave function minorize it between
        knots and extended chords majorize it outside, so together with the
        trust rows the piecewise-linear hypograph is a global lower bound,
        exact at every knot -- in particular at ref itself, which keeps the
        iterate-improvement argument of successive convex approximation valid.
        The payoff is a subproblem with no exponential cones at all; the
        interior-point backend stalls far from optimum when these logs (with
        arguments spanning decades) join the cone mix.

        The secant knots are baked in at build time, so ref mode is for
        single-solve programs; parametrized programs meant for re-solving
        should use ref=None.
        """
        self._check_mutable()
        name = getattr(var, "name", lambda: None)()
        if name not in self.variables or self.variables[name] is not var:
            raise ConicModelError("log objective terms must use variables declared on this program")
        floor = self._lower_bounds.get(name, -math.inf)
        if floor <= 0.0:
            raise ConicModelError(
                f"log-term variable {name!r} needs a declared lower bound strictly above 0"
            )
        if ref is None:
            self.log_terms.append((float(weight), var, "exp"))
            return
        if trust_factor <= 1.0 or segments < 2:
            raise ConicModelError("trust_factor must exceed 1 and segments be at least 2")
        r = np.atleast_1d(np.asarray(ref, dtype=float))
        if np.any(r < floor):
            raise ConicModelError("log-term reference must respect the declared lower bound")
        lo = np.maximum(floor, r / trust_factor)
        hi = r * trust_factor
        half = segments // 2
        # Geometric knots on each side of ref; ref itself is pinned exactly.
        steps = np.arange(half + 1) / half
        left = lo[:, None] * (r / lo)[:, None] ** steps[None, :]
        right = r[:, None] * (hi / r)[:, None] ** steps[None, 1:]
        knots = np.concatenate([left, right], axis=1)
        knots[:, half] = r
        hypo = self._aux(f"{name}_log_hypograph", int(r.shape[0]), nonneg=False)
        log_knots = np.log2(knots)
        gaps = np.diff(knots, axis=1)
        flat = gaps <= 1e-12 * knots[:, 1:]
        with np.errstate(divide="ignore", invalid="ignore"):
            slope = np.where(flat, 0.0, np.diff(log_knots, axis=1) / np.where(flat, 1.0, gaps))
        intercept = np.where(flat, log_knots[:, 1:], log_knots[:, :-1] - slope * knots[:, :-1])
        for s in range(knots.shape[1] - 1):
            self.add_linear(hypo <= cp.multiply(slope[:, s], var) + intercept[:, s],
                            f"{name}_log_secant")
        self.add_linear(var >= lo, f"{name}_log_trust")
        self.add_linear(var <= hi, f"{name}_log_trust")
        self.add_objective(float(weight) * cp.sum(hypo))
        self.log_terms.append((float(weight), var, "secant"))

    # ------------------------------------------------------------ constraints

    def add_linear(self, constraint: Any, family: str) -> None:
        self._check_mutable()
        if len(constraint.shape) > 2:
            raise ConicModelError("linear constraint must be at most 2-D")
        rows = int(np.prod(constraint.shape)) if constraint.shape else 1
        self.linear_constraints.append(LinearBlock(constraint, rows, family))

    def add_soc(self, t: Any, vec: Any, family: str) -> None:
        """||vec_i|| <= t_i.  Scalar t with a 1-D vec adds one block; a 1-D t
        with a 2-D vec adds one block per row."""
        self._check_mutable()
        t_expr = cp.Constant(t) if np.isscalar(t) else t
        if t_expr.ndim == 0:
            con = cp.SOC(t_expr, vec)
            self.soc_blocks.append(SocBlock(con, dim=int(vec.shape[0]) + 1, count=1, family=family))
        else:
            con = cp.SOC(t_expr, vec, axis=1)
            self.soc_blocks.append(
                SocBlock(con, dim=int(vec.shape[1]) + 1, count=int(vec.shape[0]), family=family)
            )

    def add_rotated_soc(self, a: Any, b: Any, z: Any, family: str) -> None:
        """Rotated cone a_i * b_i >= ||z_i||^2 (with a, b >= 0 implied).

        Encoded as the standard cone ||[2 z_i; a_i - b_i]|| <= a_i + b_i; the
        recorded dimension is len(z_i) + 2.
        """
        self._check_mutable()
        a_e = _as_expr(a)
        b_e = _as_expr(b)
        z_e = _as_expr(z)
        if a_e.ndim == 0:
            z_vec = cp.reshape(z_e, (1,), order="C") if z_e.ndim == 0 else z_e
            stacked = cp.hstack([2.0 * z_vec, cp.reshape(a_e - b_e, (1,), order="C")])
            con = cp.SOC(a_e + b_e, stacked)
            self.soc_blocks.append(
                SocBlock(con, dim=int(z_vec.shape[0]) + 2, count=1, family=family, kind="rotated")
            )
        else:
            m = int(a_e.shape[0])
            z_mat = cp.reshape(z_e, (m, 1), order="C") if z_e.ndim == 1 else z_e
            stacked = cp.hstack([2.0 * z_mat, cp.reshape(a_e - b_e, (m, 1), order="C")])
            con = cp.SOC(a_e + b_e, stacked, axis=1)
            self.soc_blocks.append(
                SocBlock(con, dim=int(z_mat.shape[1]) + 2, count=m, family=family, kind="rotated")
            )

    def add_squared_norm_bound(self, vecs: Any, bounds: Any, family: str,
                               scale: Any = None) -> None:
        """||vec_i||^2 <= bound_i with bound_i affine (rotated cone against 1).

        scale (optional, positive, per-row) divides vec_i and bound_i by scale_i
        and scale_i^2 respectively -- the same constraint, but with cone members
        near unit magnitude when scale_i is the expected norm of vec_i.
        """
        v = _as_expr(vecs)
        b = _as_expr(bounds)
        if scale is not None:
            s = np.asarray(scale, dtype=float)
            if np.any(s <= 0):
                raise ConicModelError("squared-norm scale must be positive")
            v = cp.multiply(1.0 / (s[:, None] if v.ndim == 2 else s), v)
            b = cp.multiply(1.0 / s**2, b)
        ones = 1.0 if b.ndim == 0 else np.ones(int(b.shape[0]))
        self.add_rotated_soc(b, ones, v, family)

    def add_psd3(self, matrix: Any, family: str) -> None:
        self._check_mutable()
        if matrix.shape != (3, 3):
            raise ConicModelError("PSD blocks are 3x3 only")
        if not matrix.is_affine():
            raise ConicModelError("PSD block entries must be affine")
        # The PSD atom needs structural symmetry; skip the explicit
        # symmetrization (which doubles the expression tree) when the input
        # already carries it, as the matrix-basis emission path does.
        sym = matrix if matrix.is_symmetric() else (matrix + matrix.T) / 2
        self.psd_blocks.append(PsdBlock(sym >> 0, family))

    # ------------------------------------------------- reformulation helpers

    def add_inverse_product_bound(self, x: Any, y: Any, t: Any, coeff: float,
                                  family: str = "inverse_product",
                                  hint: tuple[Any, Any] | None = None) -> None:
        """Enforce coeff / (x_i * y_i) <= t_i for positive x, y, t and coeff > 0.

        The constraint is normalized before encoding: with reference magnitudes
        (sx, sy) from hint (default 1), x' = x/sx, y' = y/sy, t' = t*sx*sy/coeff
        give the equivalent 1/(x'_i y'_i) <= t'_i, built as the geometric-mean
        tower u_i^2 <= x'_i y'_i, v_i^2 <= t'_i, u_i v_i >= 1 (three rotated
        cones).  With hint set to the expansion-point values of x and y, every
        cone member sits near unit magnitude regardless of coeff -- the raw
        coefficient here spans ~1e7, which stalls interior-point centering if
        left inside a single cone.
        """
        if not (coeff > 0 and math.isfinite(coeff)):
            raise ConicModelError("inverse-product coefficient must be positive and finite")
        x_e, y_e, t_e = _as_expr(x), _as_expr(y), _as_expr(t)
        sx = np.asarray(1.0 if hint is None else hint[0], dtype=float)
        sy = np.asarray(1.0 if hint is None else hint[1], dtype=float)
        if np.any(sx <= 0) or np.any(sy <= 0):
            raise ConicModelError("inverse-product hint magnitudes must be positive")
        st = coeff / (sx * sy)
        if x_e.ndim == 0:
            u = self._aux(f"{family}_gm", ())
            v = self._aux(f"{family}_rt", ())
            ones: Any = 1.0
        else:
            m = int(x_e.shape[0])
            u = self._aux(f"{family}_gm", m)
            v = self._aux(f"{family}_rt", m)
            ones = np.ones(m)
        self.add_rotated_soc(cp.multiply(1.0 / sx, x_e), cp.multiply(1.0 / sy, y_e), u, family)
        self.add_rotated_soc(cp.multiply(1.0 / st, t_e), ones, v, family)
        self.add_rotated_soc(u, v, ones, family)

    def add_reciprocal_sum_bound(self, tau: cp.Variable, budget: float,
                                 family: str = "reciprocal_sum",
                                 hint: Any = None,
                                 scale_pair: tuple[Any, Any] | None = None) -> cp.Variable:
        """Enforce (1/N) * sum(1/tau_i) <= budget via per-entry reciprocals.

        Callers must bound tau away from zero themselves (peak-power bound).
        hint (optional, positive, per-entry) is the expected magnitude of tau;
        the hyperbolic cone is built on (hint*recip, tau/hint) so both members
        are near 1 at the expected point.  Parametrized programs pass
        scale_pair=(s, s_inv) instead -- two Parameters whose values must
        multiply to ~1 entrywise -- so the normalization can follow the
        expansion point across re-solves.  Returns the reciprocal auxiliary
        (always in true 1/tau units) for inspection.
        """
        n = int(tau.shape[0])
        recip = self._aux(f"{family}_recip", n)
        if scale_pair is not None:
            s_mul, s_inv = scale_pair
        else:
            s = np.ones(n) if hint is None else np.asarray(hint, dtype=float)
            if np.any(s <= 0):
                raise ConicModelError("reciprocal-sum hint magnitudes must be positive")
            s_mul, s_inv = s, 1.0 / s
        self.add_rotated_soc(
            cp.multiply(s_mul, recip), cp.multiply(s_inv, tau), np.ones(n), family
        )  # recip_i * tau_i >= 1
        self.add_linear(cp.sum(recip) <= n * budget, family)
        return recip

    # ----------------------------------------------------------------- solve

    def _assemble(self) -> cp.Problem:
        if self._problem is not None:
            return self._problem
        obj = cp.Constant(0.0)
        for term in self._objective_terms:
            obj = obj + cp.sum(term)
        for weight, var, mode in self.log_terms:
            if mode == "exp":
                obj = obj + (weight / math.log(2.0)) * cp.sum(cp.log(var))
        constraints = [b.constraint for b in self.linear_constraints]
        constraints += [b.constraint for b in self.soc_blocks]
        constraints += [b.constraint for b in self.psd_blocks]
        if self.objective_scale <= 0 or not math.isfinite(self.objective_scale):
            raise ConicModelError("objective_scale must be positive and finite")
        problem = cp.Problem(cp.Maximize(self.objective_scale * obj), constraints)
        if self.parameters and not problem.is_dcp(dpp=True):
            # A parameter product somewhere would silently force a full
            # re-canonicalization on every solve; fail loudly instead.
            raise ConicModelError(
                "parametrized program is not re-solve friendly (a coefficient "
                "multiplies two parameters; fold their product into one)"
            )
        self._problem = problem
        return problem

    def solve(self, solver: str | None = None, verbose: bool | None = None) -> SolverStatus:
        """Solve and classify the outcome.  kind="optimal" promises primal
        feasibility within TOL_FEAS and relative gap within TOL_GAP.
        Set UAVSEC_VERBOSE=1 to stream backend logs when verbose is not given."""
        if verbose is None:
            verbose = os.environ.get("UAVSEC_VERBOSE", "") not in ("", "0")
        problem = self._assemble()
        solvers = [solver] if solver else ["CLARABEL", "SCS"]
        status: SolverStatus | None = None
        for backend in solvers:
            opts = dict(_CLARABEL_OPTS) if backend == "CLARABEL" else dict(_SCS_OPTS)
            t0 = time.perf_counter()
            try:
                with warnings.catch_warnings():
                    # Reduced-accuracy outcomes are classified and handled via
                    # the returned status kind; the blanket warning is noise.
                    warnings.filterwarnings(
                        "ignore", message="Solution may be inaccurate", category=UserWarning
                    )
                    problem.solve(solver=backend, verbose=verbose, **opts)
                raw = problem.status or "none"
            except (cp.error.SolverError, ValueError, ArithmeticError) as exc:
                raw = f"solver_error: {exc}"
            wall = time.perf_counter() - t0
            kind = _classify(raw)
            if backend == "SCS" and kind == "iteration_limit":
                # A first-order method at its iteration cap can be arbitrarily
                # far from optimal; do not feed such points back into SCA.
                kind = "numerical_failure"
            objective = problem.value if kind in ("optimal", "iteration_limit") else None
            if objective is not None:
                objective /= self.objective_scale
            if objective is not None and not math.isfinite(objective):
                # An interior-point reduced-accuracy outcome can carry variable
                # values whose exact objective evaluates to NaN (log of a
                # slightly negative slack); the primal point is still usable.
                objective = None
                if kind == "optimal":
                    kind = "numerical_failure"
            status = SolverStatus(kind=kind, objective=objective, solver=backend,
                                  raw_status=raw, wall_s=wall)
            if kind != "numerical_failure":
                break
        assert status is not None
        return status

    def value(self, name: str) -> np.ndarray | float:
        var = self.variables[name]
        if var.value is None:
            raise ConicModelError(f"variable {name!r} has no value; solve first")
        return var.value

    # ------------------------------------------------------------- inspection

    def census(self) -> dict[str, Any]:
        """Block counts by kind/dimension/family, used by the structural tests."""
        soc_by_dim: dict[int, int] = {}
        for blk in self.soc_blocks:
            soc_by_dim[blk.dim] = soc_by_dim.get(blk.dim, 0) + blk.count
        families: dict[str, int] = {}
        for blk in self.linear_constraints:
            families[blk.family] = families.get(blk.family, 0) + blk.rows
        for blk in self.soc_blocks:
            families[blk.family] = families.get(blk.family, 0) + blk.count
        for blk in self.psd_blocks:
            families[blk.family] = families.get(blk.family, 0) + 1
        return {
            "psd3_blocks": len(self.psd_blocks),
            "soc_blocks_by_dim": dict(sorted(soc_by_dim.items())),
            "linear_rows": sum(b.rows for b in self.linear_constraints),
            "log_terms": sum(int(np.prod(v.shape)) if v.shape else 1 for _, v, _ in self.log_terms),
            "scalar_variables": sum(
                int(np.prod(v.shape)) if v.shape else 1 for v in self.variables.values()
            ),
            "families": families,
        }

    def dump(self, path: str) -> None:
        """Write the compiled sparse conic data (objective, constraint matrix,
        cone sizes) as JSON for external cross-checking."""
        problem = self._assemble()
        data, _, _ = problem.get_problem_data("CLARABEL")
        a = data["A"].tocoo()
        dims = data["dims"]
        payload = {
            "minimize_c": np.asarray(data["c"]).tolist(),
            "A": {
                "shape": list(a.shape),
                "row": a.row.tolist(),
                "col": a.col.tolist(),
                "val": a.data.tolist(),
            },
            "b": np.asarray(data["b"]).tolist(),
            "cones": {
                "zero": int(dims.zero),
                "nonneg": int(dims.nonneg),
                "exp": int(dims.exp),
                "soc": [int(d) for d in dims.soc],
                "psd": [int(d) for d in dims.psd],
            },
        }
        with open(path, "w") as fh:
            json.dump(payload, fh)


def _as_expr(x: Any):
    return cp.Constant(np.asarray(x, dtype=float)) if not isinstance(x, cp.expressions.expression.Expression) else x


def _classify(raw: str) -> str:
    if raw == cp.OPTIMAL:
        return "optimal"
    if raw == cp.OPTIMAL_INACCURATE:
        return "iteration_limit"
    if raw in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
        return "infeasible"
    if raw in (cp.UNBOUNDED, cp.UNBOUNDED_INACCURATE):
        return "unbounded"
    return "numerical_failure"
