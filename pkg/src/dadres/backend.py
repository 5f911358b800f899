"""Solver backends and the exhaustive oracles built on them.

``HighsBackend`` drives HiGHS through its native Python API;
``ScipyBackend`` goes through ``scipy.optimize.milp`` (also HiGHS inside,
but a separate code path and model hand-off). The backend is picked by
name or by the ``DADRES_BACKEND`` environment variable, which wins.
"""

from __future__ import annotations

import math
import os
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from dadres.attackgraph import AttackScenario, enumerate_attacks, impact_signature
from dadres.core import FirstStageDecision, Instance, LimitExceededError, ResponsePlan, enumerate_decisions
from dadres.milp.model import BINARY, EQ, GE, LE, MilpModel
from dadres.milp.third_stage import build_third_stage_milp, extract_plan
from dadres.resilience import ResilienceReport, evaluate_metrics

BACKEND_ENV = "DADRES_BACKEND"

OPTIMAL, INFEASIBLE, UNBOUNDED, GAP_LIMIT, TIME_LIMIT = "Optimal", "Infeasible", "Unbounded", "GapLimit", "TimeLimit"


class SolverError(RuntimeError):
    """Numerical or internal solver failure."""


class BackendUnavailableError(SolverError):
    pass


@dataclass(frozen=True)
class SolveOptions:
    gap: float = 1e-9
    time_limit: float | None = None
    seed: int = 0
    threads: int = 1


@dataclass
class SolveResult:
    status: str
    objective: float
    bound: float
    values: dict[str, float] = field(default_factory=dict)
    wall_time: float = 0.0

    @property
    def has_solution(self) -> bool:
        return self.status in (OPTIMAL, GAP_LIMIT) or (self.status == TIME_LIMIT and bool(self.values))


@dataclass
class _Arrays:
    names: list[str]
    c: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    integrality: np.ndarray
    A: sparse.csr_matrix
    row_lb: np.ndarray
    row_ub: np.ndarray


def _to_arrays(m: MilpModel) -> _Arrays:
    m.validate()
    if m.bilinear or any(c.params for c in m.constraints):
        raise ValueError(f"model {m.name} has unbound parameters; bind them first")
    names = list(m.variables)
    col = {n: j for j, n in enumerate(names)}
    c = np.array([m.objective.get(n, 0.0) for n in names], dtype=float)
    lb = np.array([m.variables[n].lb for n in names], dtype=float)
    ub = np.array([m.variables[n].ub for n in names], dtype=float)
    integ = np.array([1 if m.variables[n].kind == BINARY else 0 for n in names], dtype=np.int32)
    rows, cols, vals = [], [], []
    rlb, rub = [], []
    for i, con in enumerate(m.constraints):
        for k, a in con.coeffs.items():
            rows.append(i)
            cols.append(col[k])
            vals.append(a)
        rlb.append(con.rhs if con.sense in (GE, EQ) else -np.inf)
        rub.append(con.rhs if con.sense in (LE, EQ) else np.inf)
    A = sparse.csr_matrix((vals, (rows, cols)), shape=(len(m.constraints), len(names)))
    return _Arrays(names, c, lb, ub, integ, A, np.array(rlb, dtype=float), np.array(rub, dtype=float))


class Backend:
    name = "abstract"

    def __init__(self, options: SolveOptions | None = None):
        self.options = options or SolveOptions()

    def solve(self, m: MilpModel, opts: SolveOptions | None = None) -> SolveResult:
        raise NotImplementedError


class HighsBackend(Backend):
    name = "highs"

    def __init__(self, options: SolveOptions | None = None):
        super().__init__(options)
        try:
            import highspy  # noqa: F401
        except ImportError as exc:  # pragma: no cover - depends on environment
            raise BackendUnavailableError("highspy is not installed") from exc

    def _run(self, m: MilpModel, arr: _Arrays, opts: SolveOptions, presolve: bool):
        import highspy

        h = highspy.Highs()
        h.setOptionValue("output_flag", False)
        h.setOptionValue("threads", int(opts.threads))
        h.setOptionValue("random_seed", int(opts.seed))
        h.setOptionValue("mip_rel_gap", float(opts.gap))
        h.setOptionValue("mip_abs_gap", 1e-9)
        h.setOptionValue("primal_feasibility_tolerance", 1e-9)
        h.setOptionValue("dual_feasibility_tolerance", 1e-9)
        h.setOptionValue("mip_feasibility_tolerance", 1e-9)
        if not presolve:
            h.setOptionValue("presolve", "off")
        if opts.time_limit is not None:
            h.setOptionValue("time_limit", float(opts.time_limit))
        lp = highspy.HighsLp()
        n, r = len(arr.names), arr.A.shape[0]
        lp.num_col_, lp.num_row_ = n, r
        lp.col_cost_ = arr.c
        lp.col_lower_ = arr.lb
        lp.col_upper_ = arr.ub
        lp.row_lower_ = arr.row_lb
        lp.row_upper_ = arr.row_ub
        lp.offset_ = float(m.objective_constant)
        lp.sense_ = highspy.ObjSense.kMaximize if m.sense == "max" else highspy.ObjSense.kMinimize
        csc = arr.A.tocsc()
        csc.sort_indices()
        lp.a_matrix_.format_ = highspy.MatrixFormat.kColwise
        lp.a_matrix_.num_col_, lp.a_matrix_.num_row_ = n, r
        lp.a_matrix_.start_ = csc.indptr.astype(np.int32)
        lp.a_matrix_.index_ = csc.indices.astype(np.int32)
        lp.a_matrix_.value_ = csc.data.astype(float)
        if arr.integrality.any():
            lp.integrality_ = [highspy.HighsVarType.kInteger if i else highspy.HighsVarType.kContinuous for i in arr.integrality]
        h.passModel(lp)
        h.run()
        return h, h.getModelStatus()

    def solve(self, m: MilpModel, opts: SolveOptions | None = None) -> SolveResult:
        import highspy

        opts = opts or self.options
        t0 = time.perf_counter()
        arr = _to_arrays(m)
        if not arr.names:
            return SolveResult(OPTIMAL, m.objective_constant, m.objective_constant, {}, 0.0)
        h, st = self._run(m, arr, opts, presolve=True)
        S = highspy.HighsModelStatus
        if st == S.kUnboundedOrInfeasible:
            h, st = self._run(m, arr, opts, presolve=False)
        info = h.getInfo()
        mixed = bool(arr.integrality.any())
        wall = time.perf_counter() - t0

        def values():
            sol = h.getSolution()
            return {n: float(v) for n, v in zip(arr.names, sol.col_value)}

        if st == S.kOptimal or st == S.kModelEmpty:
            obj = float(info.objective_function_value)
            bound = float(info.mip_dual_bound) if mixed else obj
            return SolveResult(OPTIMAL, obj, bound, values(), wall)
        if st == S.kInfeasible:
            return SolveResult(INFEASIBLE, math.nan, math.nan, {}, wall)
        if st in (S.kUnbounded, S.kUnboundedOrInfeasible):
            return SolveResult(UNBOUNDED, math.nan, math.nan, {}, wall)
        if st == S.kTimeLimit:
            feasible = info.primal_solution_status == highspy.kSolutionStatusFeasible
            obj = float(info.objective_function_value) if feasible else math.nan
            bound = float(info.mip_dual_bound) if mixed else math.nan
            return SolveResult(TIME_LIMIT, obj, bound, values() if feasible else {}, wall)
        raise SolverError(f"HiGHS returned {h.modelStatusToString(st)} on {m.name}")


class ScipyBackend(Backend):
    name = "scipy"

    def solve(self, m: MilpModel, opts: SolveOptions | None = None) -> SolveResult:
        from scipy.optimize import Bounds, LinearConstraint, milp

        opts = opts or self.options
        t0 = time.perf_counter()
        arr = _to_arrays(m)
        if not arr.names:
            return SolveResult(OPTIMAL, m.objective_constant, m.objective_constant, {}, 0.0)
        sign = -1.0 if m.sense == "max" else 1.0
        cons = [LinearConstraint(arr.A, arr.row_lb, arr.row_ub)] if arr.A.shape[0] else []
        options = {"disp": False, "mip_rel_gap": opts.gap}
        if opts.time_limit is not None:
            options["time_limit"] = opts.time_limit
        res = milp(
            sign * arr.c,
            integrality=arr.integrality,
            bounds=Bounds(arr.lb, arr.ub),
            constraints=cons,
            options=options,
        )
        wall = time.perf_counter() - t0
        if res.status == 0:
            obj = sign * float(res.fun) + m.objective_constant
            bound = obj
            if getattr(res, "mip_dual_bound", None) is not None and arr.integrality.any():
                bound = sign * float(res.mip_dual_bound) + m.objective_constant
            return SolveResult(OPTIMAL, obj, bound, dict(zip(arr.names, map(float, res.x))), wall)
        if res.status == 2:
            return SolveResult(INFEASIBLE, math.nan, math.nan, {}, wall)
        if res.status == 3:
            return SolveResult(UNBOUNDED, math.nan, math.nan, {}, wall)
        if res.status == 1:
            if res.x is None:
                return SolveResult(TIME_LIMIT, math.nan, math.nan, {}, wall)
            obj = sign * float(res.fun) + m.objective_constant
            return SolveResult(TIME_LIMIT, obj, math.nan, dict(zip(arr.names, map(float, res.x))), wall)
        raise SolverError(f"scipy milp failed on {m.name}: {res.message}")


BACKENDS = {"highs": HighsBackend, "scipy": ScipyBackend}


def get_backend(name: str | None = None, options: SolveOptions | None = None) -> Backend:
    """Instantiate a backend; the environment variable takes precedence over ``name``."""
    chosen = os.environ.get(BACKEND_ENV) or name or "highs"
    try:
        cls = BACKENDS[chosen]
    except KeyError:
        raise BackendUnavailableError(f"unknown backend {chosen!r}; choose from {sorted(BACKENDS)}") from None
    return cls(options)


def solve(m: MilpModel, opts: SolveOptions | None = None, backend: Backend | None = None) -> SolveResult:
    return (backend or get_backend()).solve(m, opts)


def require_optimal(res: SolveResult, what: str) -> SolveResult:
    if res.status != OPTIMAL:
        raise SolverError(f"{what}: solver status {res.status}")
    return res


# --------------------------------------------------------------------------
# oracles


def exact_inner(
    inst: Instance, delta: FirstStageDecision, att: AttackScenario, backend: Backend
) -> tuple[float, ResponsePlan, ResilienceReport]:
    """Exact best response to ``att`` under ``delta`` with its recomputed metrics."""
    model = build_third_stage_milp(inst, delta, att)
    res = require_optimal(backend.solve(model), "third-stage MILP")
    plan = extract_plan(model, res.values)
    return res.objective, plan, evaluate_metrics(inst, plan)


@dataclass(frozen=True)
class BruteForceLimits:
    max_decisions: int = 2**16
    max_attacks: int = 10_000


@dataclass
class BruteForceResult:
    value: float
    delta: FirstStageDecision
    attack: AttackScenario
    # every (delta, attack, inner value) evaluated, in enumeration order
    table: list[tuple[FirstStageDecision, AttackScenario, float]]

    def inner_max(self, delta: FirstStageDecision) -> float:
        return max(v for d, _, v in self.table if d == delta)


def brute_force_trilevel(
    inst: Instance, backend: Backend, limits: BruteForceLimits | None = None
) -> BruteForceResult:
    """min over first-stage decisions of max over affordable attacks of the exact inner value.

    Inner values depend on the decision only through cooperation and backups
    and on the attack only through its capacity impact, so they are cached
    on that key; controls change which attacks are affordable.
    """
    limits = limits or BruteForceLimits()
    cache: dict[tuple, float] = {}
    table = []
    best = None
    for delta in enumerate_decisions(inst, limit=limits.max_decisions):
        attacks, overflow = enumerate_attacks(inst, delta, cap=limits.max_attacks)
        if overflow:
            raise LimitExceededError(f"more than {limits.max_attacks} attacks under {delta}")
        worst_v, worst_a = -math.inf, None
        for att in attacks:
            key = (delta.coop, delta.backup, impact_signature(inst, att))
            if key not in cache:
                cache[key] = exact_inner(inst, delta, att, backend)[0]
            v = cache[key]
            table.append((delta, att, v))
            if v > worst_v + 1e-9:
                worst_v, worst_a = v, att
        if best is None or worst_v < best[0] - 1e-9:
            best = (worst_v, delta, worst_a)
    return BruteForceResult(best[0], best[1], best[2], table)
