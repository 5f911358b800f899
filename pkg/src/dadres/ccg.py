"""Column-and-constraint generation over the master and attacker subproblem.

The master, restricted to a growing set of attacks, yields lower bounds.
The attacker subproblem yields upper bounds: exactly in ``enumerate``
mode, and in ``fast``/``tight`` mode through LP duals with recovery times
pinned, which overestimate by at most the recovery penalty terms.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from dadres.attackgraph import (
    AttackScenario,
    attack_cost,
    enumerate_attacks,
    impact_signature,
    is_affordable,
    validate_attack,
)
from dadres.backend import (
    INFEASIBLE,
    OPTIMAL,
    UNBOUNDED,
    Backend,
    SolverError,
    exact_inner,
    require_optimal,
)
from dadres.core import FirstStageDecision, Instance, ResponsePlan
from dadres.milp.master import build_master, extract_decision
from dadres.milp.subproblem import DEFAULT_BIG_M_Q, build_subproblem_milp, extract_attack
from dadres.milp.third_stage import INF_FIX, RecoveryFix, build_third_stage_lp
from dadres.resilience import ResilienceReport

MODES = ("fast", "tight", "enumerate")
REASONS = ("gap-closed", "stalled", "iteration-limit", "time-limit")

MAX_ESCALATIONS = 3
BIG_M_CHECK_TOL = 1e-5


class BigMError(SolverError):
    """The dual-product big-M stayed too small after all escalations."""


class WorstAttack(NamedTuple):
    attack: AttackScenario
    bound: float
    value: float


class _InnerCache:
    """Exact inner values keyed by what they actually depend on."""

    def __init__(self, inst: Instance, backend: Backend):
        self.inst, self.backend = inst, backend
        self._store: dict[tuple, tuple[float, ResponsePlan, ResilienceReport]] = {}

    def get(self, delta: FirstStageDecision, att: AttackScenario):
        key = (delta.coop, delta.backup, impact_signature(self.inst, att))
        if key not in self._store:
            self._store[key] = exact_inner(self.inst, delta, att, self.backend)
        return self._store[key]

    def value(self, delta: FirstStageDecision, att: AttackScenario) -> float:
        return self.get(delta, att)[0]


def tight_fixes(inst: Instance, n_grid: int = 5) -> list[RecoveryFix]:
    grid = sorted({int(round(v)) for v in np.linspace(0, inst.tau, n_grid)})
    return [INF_FIX] + [(t, None) for t in grid] + [(None, t) for t in grid]


def solve_subproblem(
    inst: Instance,
    delta: FirstStageDecision,
    backend: Backend,
    recovery_fix: RecoveryFix = INF_FIX,
    big_m_q: float = DEFAULT_BIG_M_Q,
) -> tuple[AttackScenario, float] | None:
    """Best attack against the response LP with pinned recovery times.

    The big-M of the dual products is checked by re-solving the primal at the
    returned attack and escalated tenfold on mismatch. Returns ``None`` when
    some affordable attack leaves the pinned-recovery LP infeasible, i.e. the
    bound for this fix is infinite.
    """
    m_q = big_m_q
    for _ in range(MAX_ESCALATIONS + 1):
        sp = build_subproblem_milp(inst, delta, recovery_fix, m_q)
        res = backend.solve(sp)
        if res.status in (UNBOUNDED, INFEASIBLE):
            return None
        require_optimal(res, "attacker subproblem")
        att = extract_attack(sp, res.values, inst)
        primal = backend.solve(build_third_stage_lp(inst, delta, att, recovery_fix))
        if primal.status == INFEASIBLE:
            return None
        require_optimal(primal, "primal check")
        if abs(primal.objective - res.objective) <= BIG_M_CHECK_TOL * max(1.0, abs(primal.objective)):
            return att, res.objective
        m_q *= 10.0
    raise BigMError(f"dual-product big-M still too small at {m_q / 10:g}")


def worst_attack(
    inst: Instance,
    delta: FirstStageDecision,
    backend: Backend,
    mode: str = "enumerate",
    *,
    big_m_q: float = DEFAULT_BIG_M_Q,
    max_attacks: int = 10_000,
    cache: _InnerCache | None = None,
) -> WorstAttack:
    """Attacker's reply to ``delta``: an attack, an upper bound, and its exact value."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    cache = cache or _InnerCache(inst, backend)
    if mode == "enumerate":
        attacks, overflow = enumerate_attacks(inst, delta, cap=max_attacks)
        if overflow:
            raise SolverError(f"more than {max_attacks} attacks; use fast or tight mode")
        best, best_v = attacks[0], -math.inf
        for att in attacks:
            v = cache.value(delta, att)
            if v > best_v + 1e-9:
                best, best_v = att, v
        return WorstAttack(best, best_v, best_v)

    fixes = [INF_FIX] if mode == "fast" else tight_fixes(inst)
    bound = math.inf
    candidates = []
    for fix in fixes:
        out = solve_subproblem(inst, delta, backend, fix, big_m_q)
        if out is None:
            continue
        att, val = out
        bound = min(bound, val)
        candidates.append(att)
    if not candidates:
        raise SolverError("no recovery fix produced a bounded subproblem")
    best, best_v = None, -math.inf
    for att in candidates:
        v = cache.value(delta, att)
        if v > best_v + 1e-9:
            best, best_v = att, v
    return WorstAttack(best, bound, best_v)


def mode_slack(inst: Instance, mode: str) -> float:
    """Worst-case overestimate of the mode's bound over the exact attacker value."""
    if mode == "enumerate":
        return 0.0
    obj = inst.objective
    return inst.recovery_penalty * (obj.w_rec_delay + obj.w_rec_unmet)


@dataclass(frozen=True)
class CcgOptions:
    eps_abs: float = 1e-5
    max_iters: int = 50
    time_limit: float | None = None
    mode: str = "enumerate"
    initial: tuple[AttackScenario, ...] | None = None
    big_m_q: float = DEFAULT_BIG_M_Q
    max_attacks: int = 10_000


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    lb: float
    ub: float
    certified: float
    attack_id: str
    seconds: float


@dataclass
class CcgResult:
    delta: FirstStageDecision
    attack: AttackScenario
    plan: ResponsePlan
    report: ResilienceReport
    lb: float
    ub: float
    certified: float
    log: list[IterationRecord]
    reason: str
    mode: str
    scenarios: list[AttackScenario] = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return len(self.log)

    @property
    def converged(self) -> bool:
        return self.reason == "gap-closed"

    def summary(self) -> dict:
        """Time-free digest, safe to write into deterministic output files."""
        return {
            "lb": round(self.lb, 6) + 0.0,
            "ub": round(self.ub, 6) + 0.0,
            "certified": round(self.certified, 6) + 0.0,
            "iterations": self.iterations,
            "termination": self.reason,
            "mode": self.mode,
            "scenarios": [a.to_dict()["edges"] for a in self.scenarios],
        }


def attack_id(att: AttackScenario) -> str:
    return ";".join(f"{s}>{d}#{k}" for s, d, k in att.canonical) or "empty"


def _certify(inst, delta, pool, cache):
    """Largest exact value over pooled attacks affordable under ``delta``."""
    best, best_v = None, -math.inf
    for att in pool:
        if not is_affordable(attack_cost(inst, att, delta), inst.budgets.attacker):
            continue
        v = cache.value(delta, att)
        if v > best_v + 1e-9:
            best, best_v = att, v
    return best, best_v


def solve_ccg(inst: Instance, backend: Backend, opts: CcgOptions | None = None) -> CcgResult:
    opts = opts or CcgOptions()
    if opts.mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    graph = inst.attack_graph
    scenarios = list(opts.initial) if opts.initial else [AttackScenario.empty(graph)]
    for att in scenarios:
        ok, why = validate_attack(graph, att)
        if not ok:
            raise ValueError(f"initial scenario is not a valid attack: {why}")
    pool = list(scenarios)
    cache = _InnerCache(inst, backend)
    slack = mode_slack(inst, opts.mode)
    lb, ub = -math.inf, math.inf
    incumbent = None
    log: list[IterationRecord] = []
    start = time.perf_counter()
    reason = "iteration-limit"
    it = 0
    while True:
        it += 1
        t0 = time.perf_counter()
        master = build_master(inst, scenarios)
        res = require_optimal(backend.solve(master), "master")
        delta = extract_decision(master, res.values)
        lb = max(lb, res.objective)
        wa = worst_attack(
            inst, delta, backend, opts.mode, big_m_q=opts.big_m_q, max_attacks=opts.max_attacks, cache=cache
        )
        ok, why = validate_attack(graph, wa.attack)
        if not ok:
            raise SolverError(f"subproblem returned an invalid attack: {why}")
        if wa.bound < ub:
            ub, incumbent = wa.bound, delta
        known = any(a.edges == wa.attack.edges for a in scenarios)
        if not any(a.edges == wa.attack.edges for a in pool):
            pool.append(wa.attack)
        _, cert = _certify(inst, incumbent, pool, cache)
        log.append(IterationRecord(it, lb, ub, cert, attack_id(wa.attack), time.perf_counter() - t0))
        if ub - lb <= opts.eps_abs + slack:
            reason = "gap-closed"
            break
        if known:
            reason = "stalled"
            break
        if it >= opts.max_iters:
            reason = "iteration-limit"
            break
        if opts.time_limit is not None and time.perf_counter() - start >= opts.time_limit:
            reason = "time-limit"
            break
        scenarios.append(wa.attack)

    worst, cert = _certify(inst, incumbent, pool, cache)
    _, plan, report = cache.get(incumbent, worst)
    return CcgResult(incumbent, worst, plan, report, lb, ub, cert, log, reason, opts.mode, scenarios)


def write_log_csv(result: CcgResult, path: str | Path, with_times: bool = True) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iter", "lb", "ub", "certified", "seconds"])
        for r in result.log:
            secs = f"{r.seconds:.3f}" if with_times else ""
            w.writerow([r.iteration, f"{r.lb:.6f}", f"{r.ub:.6f}", f"{r.certified:.6f}", secs])
