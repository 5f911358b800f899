"""Domain types for the hospital network, first-stage decisions and responses.

Sparse maps (plan, capacities, catalog limits) default to zero for absent
keys, and for time steps outside the horizon.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Iterator, Mapping

import numpy as np

from dadres.attackgraph import (
    AttackGraph,
    AttackScenario,
    EdgeId,
    capacity_factor,
)

DECISION_CLASSES = ("coop", "backup", "control")

# policy code -> decision classes it allows
POLICIES: dict[int, frozenset[str]] = {
    0: frozenset(),
    1: frozenset({"coop"}),
    2: frozenset({"backup"}),
    3: frozenset({"control"}),
    4: frozenset({"coop", "backup"}),
    5: frozenset({"coop", "control"}),
    6: frozenset({"backup", "control"}),
    7: frozenset(DECISION_CLASSES),
}


class LimitExceededError(RuntimeError):
    """An enumeration would exceed its configured size limit."""


@dataclass(frozen=True)
class Procedure:
    id: str
    completion_window: int


@dataclass(frozen=True)
class Cooperation:
    """Catalog entry for a directed cooperation agreement h -> h2."""

    cost: float
    limit_total: float = 0.0
    limits_tp: Mapping[tuple[int, str], float] = field(default_factory=dict)
    limits_p: Mapping[str, float] = field(default_factory=dict)
    limits_t: Mapping[int, float] = field(default_factory=dict)
    lags: Mapping[str, int] = field(default_factory=dict)


@dataclass(frozen=True)
class Backup:
    cost: float
    limit_total: float = 0.0
    limits_t: Mapping[int, float] = field(default_factory=dict)
    limits_tp: Mapping[tuple[int, str], float] = field(default_factory=dict)


@dataclass(frozen=True)
class ControlLevel:
    id: str
    cost: float
    effects: Mapping[EdgeId, float] = field(default_factory=dict)


@dataclass(frozen=True)
class Control:
    id: str
    levels: tuple[ControlLevel, ...]

    def level(self, level_id: str) -> ControlLevel:
        for lvl in self.levels:
            if lvl.id == level_id:
                return lvl
        raise KeyError(f"control {self.id!r} has no level {level_id!r}")


@dataclass(frozen=True)
class Budgets:
    defender: float
    attacker: float


@dataclass(frozen=True)
class ObjectiveConfig:
    """Weights of the six resilience terms, recovery thresholds and penalty.

    ``recovery_penalty`` is the value charged when a curve never settles
    below its threshold; ``None`` means ``tau + 1``.
    """

    w_loss_delay: float = 1.0
    w_loss_unmet: float = 1.0
    w_rec_delay: float = 0.01
    w_rec_unmet: float = 0.01
    w_res_delay: float = 0.01
    w_res_unmet: float = 0.01
    kappa_delay: float = 0.0
    kappa_unmet: float = 0.0
    recovery_penalty: float | None = None

    @property
    def weights(self) -> dict[str, float]:
        return {
            "loss_delay": self.w_loss_delay,
            "loss_unmet": self.w_loss_unmet,
            "rec_delay": self.w_rec_delay,
            "rec_unmet": self.w_rec_unmet,
            "res_delay": self.w_res_delay,
            "res_unmet": self.w_res_unmet,
        }

    def with_weights(self, **kw: float) -> ObjectiveConfig:
        return replace(self, **kw)


@dataclass(frozen=True)
class Instance:
    hospitals: tuple[str, ...]
    procedures: tuple[Procedure, ...]
    tau: int
    tau_ub: int
    plan: Mapping[tuple[int, str, str], float]
    cap_overall: Mapping[tuple[int, str], float]
    cap_procedure: Mapping[tuple[int, str, str], float]
    cooperation: Mapping[tuple[str, str], Cooperation]
    backup: Mapping[str, Backup]
    controls: tuple[Control, ...]
    attack_graph: AttackGraph
    budgets: Budgets
    objective: ObjectiveConfig = ObjectiveConfig()
    allowed: frozenset[str] = frozenset(DECISION_CLASSES)

    # -- index sets -------------------------------------------------------
    @property
    def times(self) -> range:
        return range(self.tau + 1)

    @property
    def procedure_ids(self) -> tuple[str, ...]:
        return tuple(p.id for p in self.procedures)

    @property
    def completion(self) -> dict[str, int]:
        return {p.id: p.completion_window for p in self.procedures}

    @property
    def pairs(self) -> list[tuple[str, str]]:
        """All ordered hospital pairs (h, h2) with h != h2."""
        return [(h, g) for h in self.hospitals for g in self.hospitals if h != g]

    @property
    def recovery_penalty(self) -> float:
        m = self.objective.recovery_penalty
        return float(self.tau + 1) if m is None else float(m)

    # -- sparse lookups ---------------------------------------------------
    def x(self, t: int, p: str, h: str) -> float:
        if t < 0 or t > self.tau:
            return 0.0
        return float(self.plan.get((t, p, h), 0.0))

    def u(self, t: int, p: str, h: str) -> float:
        return float(self.cap_procedure.get((t, p, h), 0.0))

    def u_overall(self, t: int, h: str) -> float:
        return float(self.cap_overall.get((t, h), 0.0))

    def lag(self, p: str, src: str, dst: str) -> int:
        coop = self.cooperation.get((src, dst))
        return int(coop.lags.get(p, 0)) if coop else 0

    def plan_array(self) -> np.ndarray:
        """Plan as an array indexed [t, p, h] in declaration order."""
        arr = np.zeros((self.tau + 1, len(self.procedures), len(self.hospitals)))
        pi = {p: i for i, p in enumerate(self.procedure_ids)}
        hi = {h: i for i, h in enumerate(self.hospitals)}
        for (t, p, h), v in self.plan.items():
            if 0 <= t <= self.tau:
                arr[t, pi[p], hi[h]] = v
        return arr

    def total_plan(self) -> float:
        return float(sum(self.x(t, p, h) for (t, p, h) in self.plan))

    def control(self, cid: str) -> Control:
        for c in self.controls:
            if c.id == cid:
                return c
        raise KeyError(f"unknown control {cid!r}")

    def with_budgets(self, defender: float | None = None, attacker: float | None = None) -> Instance:
        b = self.budgets
        return replace(
            self,
            budgets=Budgets(
                b.defender if defender is None else defender,
                b.attacker if attacker is None else attacker,
            ),
        )

    def with_objective(self, objective: ObjectiveConfig) -> Instance:
        return replace(self, objective=objective)


@dataclass(frozen=True)
class FirstStageDecision:
    coop: frozenset[tuple[str, str]] = frozenset()
    backup: frozenset[str] = frozenset()
    controls: frozenset[tuple[str, str]] = frozenset()  # (control id, level id)

    @property
    def control_levels(self) -> dict[str, str]:
        return dict(self.controls)

    @property
    def is_empty(self) -> bool:
        return not (self.coop or self.backup or self.controls)

    def to_dict(self) -> dict:
        return {
            "coop": [{"h": h, "h2": g} for h, g in sorted(self.coop)],
            "backup": sorted(self.backup),
            "controls": [{"control": c, "level": lvl} for c, lvl in sorted(self.controls)],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> FirstStageDecision:
        return cls(
            coop=frozenset((r["h"], r["h2"]) for r in data.get("coop", [])),
            backup=frozenset(data.get("backup", [])),
            controls=frozenset((r["control"], r["level"]) for r in data.get("controls", [])),
        )


@dataclass
class ResponsePlan:
    """Third-stage allocations; absent keys are zero."""

    y: dict[tuple[int, str, str], float] = field(default_factory=dict)
    ybar: dict[tuple[int, str, str, str], float] = field(default_factory=dict)
    z_overall: dict[tuple[int, str], float] = field(default_factory=dict)
    z_procedure: dict[tuple[int, str, str], float] = field(default_factory=dict)

    def y_array(self, inst: Instance) -> np.ndarray:
        arr = np.zeros((inst.tau + 1, len(inst.procedures), len(inst.hospitals)))
        pi = {p: i for i, p in enumerate(inst.procedure_ids)}
        hi = {h: i for i, h in enumerate(inst.hospitals)}
        for (t, p, h), v in self.y.items():
            if t not in inst.times or p not in pi or h not in hi:
                raise ValueError(f"response index {(t, p, h)} outside the instance")
            arr[t, pi[p], hi[h]] = v
        return arr

    @classmethod
    def undisturbed(cls, inst: Instance) -> ResponsePlan:
        return cls(y={k: float(v) for k, v in inst.plan.items() if 0 <= k[0] <= inst.tau})


# --------------------------------------------------------------------------
# validation


@dataclass(frozen=True)
class Violation:
    code: str
    message: str
    severity: str = "error"

    def to_dict(self) -> dict:
        return {"code": self.code, "message": self.message, "severity": self.severity}


def _finite_nonneg(value, what: str, out: list[Violation]) -> None:
    if not isinstance(value, (int, float)) or not math.isfinite(value):
        out.append(Violation("non-finite-value", f"{what} = {value!r}"))
    elif value < 0:
        out.append(Violation("negative-value", f"{what} = {value!r}"))


def validate_instance(inst: Instance) -> list[Violation]:
    """Every invariant violation of ``inst``; an empty list means valid."""
    out: list[Violation] = []
    H = set(inst.hospitals)
    P = set(inst.procedure_ids)
    T = set(inst.times)
    g = inst.attack_graph

    if len(H) != len(inst.hospitals):
        out.append(Violation("duplicate-id", "hospital ids are not unique"))
    if len(P) != len(inst.procedures):
        out.append(Violation("duplicate-id", "procedure ids are not unique"))
    if inst.tau < 0 or not 0 <= inst.tau_ub <= inst.tau:
        out.append(Violation("horizon-invalid", f"tau={inst.tau}, tau_ub={inst.tau_ub}"))
    for p in inst.procedures:
        if p.completion_window < 0:
            out.append(Violation("negative-completion-window", f"procedure {p.id!r}"))

    def check_keys(kind: str, key, t=None, p=None, h=None, h2=None) -> None:
        if t is not None and t not in T:
            out.append(Violation("time-out-of-range", f"{kind} key {key!r}"))
        if p is not None and p not in P:
            out.append(Violation("unknown-procedure", f"{kind} key {key!r}"))
        for hh in (h, h2):
            if hh is not None and hh not in H:
                out.append(Violation("unknown-hospital", f"{kind} key {key!r}"))

    for key, v in inst.plan.items():
        check_keys("plan", key, t=key[0], p=key[1], h=key[2])
        _finite_nonneg(v, f"plan{key}", out)
    for key, v in inst.cap_procedure.items():
        check_keys("cap_procedure", key, t=key[0], p=key[1], h=key[2])
        _finite_nonneg(v, f"cap_procedure{key}", out)
    for key, v in inst.cap_overall.items():
        check_keys("cap_overall", key, t=key[0], h=key[1])
        _finite_nonneg(v, f"cap_overall{key}", out)

    for (t, p, h), v in sorted(inst.plan.items()):
        if v > inst.u(t, p, h) + 1e-9:
            out.append(
                Violation("plan-exceeds-capacity", f"plan exceeds capacity at {(t, p, h)}: {v} > {inst.u(t, p, h)}")
            )
    for t in inst.times:
        for h in inst.hospitals:
            tot = sum(inst.x(t, p, h) for p in inst.procedure_ids)
            if tot > inst.u_overall(t, h) + 1e-9:
                out.append(
                    Violation(
                        "plan-exceeds-overall-capacity",
                        f"plan exceeds overall capacity at {(t, h)}: {tot} > {inst.u_overall(t, h)}",
                    )
                )

    for (h, h2), c in inst.cooperation.items():
        if h == h2:
            out.append(Violation("self-cooperation", f"cooperation pair {(h, h2)!r}"))
        check_keys("cooperation", (h, h2), h=h, h2=h2)
        _finite_nonneg(c.cost, f"cooperation{(h, h2)}.cost", out)
        _finite_nonneg(c.limit_total, f"cooperation{(h, h2)}.limit_total", out)
        for (t, p), v in c.limits_tp.items():
            check_keys("cooperation.limits_tp", (t, p), t=t, p=p)
            _finite_nonneg(v, f"cooperation{(h, h2)}.limits_tp", out)
        for p, v in c.limits_p.items():
            check_keys("cooperation.limits_p", p, p=p)
            _finite_nonneg(v, f"cooperation{(h, h2)}.limits_p", out)
        for t, v in c.limits_t.items():
            check_keys("cooperation.limits_t", t, t=t)
            _finite_nonneg(v, f"cooperation{(h, h2)}.limits_t", out)
        for p, lag in c.lags.items():
            check_keys("cooperation.lags", p, p=p)
            if not isinstance(lag, int) or lag < 0:
                out.append(Violation("lag-invalid", f"cooperation{(h, h2)} lag[{p}] = {lag!r}"))

    for h, b in inst.backup.items():
        check_keys("backup", h, h=h)
        _finite_nonneg(b.cost, f"backup[{h}].cost", out)
        _finite_nonneg(b.limit_total, f"backup[{h}].limit_total", out)
        for t, v in b.limits_t.items():
            check_keys("backup.limits_t", t, t=t)
            _finite_nonneg(v, f"backup[{h}].limits_t", out)
        for (t, p), v in b.limits_tp.items():
            check_keys("backup.limits_tp", (t, p), t=t, p=p)
            _finite_nonneg(v, f"backup[{h}].limits_tp", out)

    seen_controls = set()
    for c in inst.controls:
        if c.id in seen_controls:
            out.append(Violation("duplicate-id", f"control {c.id!r}"))
        seen_controls.add(c.id)
        if len({lvl.id for lvl in c.levels}) != len(c.levels):
            out.append(Violation("duplicate-id", f"levels of control {c.id!r}"))
        for lvl in c.levels:
            _finite_nonneg(lvl.cost, f"control {c.id}/{lvl.id} cost", out)
            for eid, inc in lvl.effects.items():
                if not g.has_edge(tuple(eid)):
                    out.append(
                        Violation("dangling-edge-reference", f"control {c.id}/{lvl.id} references edge {eid!r}")
                    )
                _finite_nonneg(inc, f"control {c.id}/{lvl.id} increment", out)

    _finite_nonneg(inst.budgets.defender, "budgets.defender", out)
    _finite_nonneg(inst.budgets.attacker, "budgets.attacker", out)

    obj = inst.objective
    for name, w in obj.weights.items():
        if not math.isfinite(w) or w < 0:
            out.append(Violation("negative-weight", f"weight {name} = {w!r}"))
    _finite_nonneg(obj.kappa_delay, "kappa_delay", out)
    _finite_nonneg(obj.kappa_unmet, "kappa_unmet", out)
    if inst.recovery_penalty < inst.tau + 1:
        out.append(
            Violation(
                "recovery-penalty-too-small",
                f"recovery penalty {inst.recovery_penalty} < tau + 1 = {inst.tau + 1}",
            )
        )
    unknown = inst.allowed - set(DECISION_CLASSES)
    if unknown:
        out.append(Violation("unknown-decision-class", f"{sorted(unknown)}"))

    out.extend(validate_graph(g, H, P))
    return out


def validate_graph(g: AttackGraph, hospitals=None, procedures=None) -> list[Violation]:
    out: list[Violation] = []
    V = set(g.vertices)
    if len(V) != len(g.vertices):
        out.append(Violation("duplicate-id", "vertex ids are not unique"))
    if g.root not in V:
        out.append(Violation("root-missing", f"root {g.root!r} not among vertices"))
    for v in sorted(g.targets - V):
        out.append(Violation("unknown-vertex", f"target {v!r}"))
    seen = set()
    for e in g.edges:
        for v in (e.src, e.dst):
            if v not in V:
                out.append(Violation("edge-endpoint-unknown", f"edge {e.id!r} endpoint {v!r}"))
        if e.id in seen:
            out.append(Violation("duplicate-edge-key", f"edge {e.id!r}"))
        seen.add(e.id)
        _finite_nonneg(e.score, f"edge {e.id!r} score", out)
    mapped = set()
    for (v, p, h), rate in sorted(g.impacts.items()):
        if v not in g.targets:
            out.append(Violation("impact-not-target", f"impact of non-target {v!r}"))
        if not (isinstance(rate, (int, float)) and 0.0 <= rate <= 1.0):
            out.append(Violation("impact-rate-out-of-range", f"rate {rate!r} for {(v, p, h)}"))
        if procedures is not None and p not in procedures:
            out.append(Violation("unknown-procedure", f"impact key {(v, p, h)}"))
        if hospitals is not None and h not in hospitals:
            out.append(Violation("unknown-hospital", f"impact key {(v, p, h)}"))
        mapped.add(v)
    for v in sorted(g.targets - mapped):
        out.append(Violation("unmapped-target", f"target {v!r} has no impact mapping", "warning"))
    return out


def errors_only(report: list[Violation]) -> list[Violation]:
    return [v for v in report if v.severity == "error"]


def validate_response(
    inst: Instance,
    delta: FirstStageDecision,
    att: AttackScenario,
    plan: ResponsePlan,
    tol: float = 1e-6,
) -> list[Violation]:
    """Check a response against the balance, capacity, cooperation, backup and impact limits."""
    out: list[Violation] = []
    T, P, H = inst.times, inst.procedure_ids, inst.hospitals

    def y(t, p, h):
        return plan.y.get((t, p, h), 0.0)

    def yb(t, p, h, g):
        return plan.ybar.get((t, p, h, g), 0.0) if 0 <= t <= inst.tau else 0.0

    def zo(t, h):
        return plan.z_overall.get((t, h), 0.0)

    def zp(t, p, h):
        return plan.z_procedure.get((t, p, h), 0.0)

    def bad(tag, msg):
        out.append(Violation(f"response-{tag}", msg))

    for name, m in (("y", plan.y), ("ybar", plan.ybar), ("z_overall", plan.z_overall), ("z_procedure", plan.z_procedure)):
        for k, v in m.items():
            if v < -tol:
                bad("negative", f"{name}{k} = {v}")

    for p in P:
        for h in H:
            lhs = rhs = 0.0
            for t in T:
                lhs += y(t, p, h) + sum(yb(t, p, h, g) for g in H if g != h)
                rhs += inst.x(t, p, h)
                incoming = sum(
                    yb(th, p, g, h)
                    for g in H
                    if g != h
                    for th in range(0, t - inst.lag(p, g, h) + 1)
                )
                if lhs > rhs + incoming + tol:
                    bad("balance", f"balance violated at {(t, p, h)}: {lhs} > {rhs + incoming}")

    factors = capacity_factor(inst, att)
    for t in T:
        for h in H:
            if sum(y(t, p, h) for p in P) > inst.u_overall(t, h) + zo(t, h) + tol:
                bad("capacity", f"overall capacity violated at {(t, h)}")
            for p in P:
                cap = inst.u(t, p, h)
                if t <= inst.tau_ub:
                    cap *= factors[(p, h)]
                if y(t, p, h) > cap + zp(t, p, h) + tol:
                    bad("capacity", f"procedure capacity violated at {(t, p, h)}")

    for h, g in inst.pairs:
        on = (h, g) in delta.coop and "coop" in inst.allowed
        c = inst.cooperation.get((h, g))

        def lim(val):
            return val if (on and c is not None) else 0.0

        for t in T:
            for p in P:
                if yb(t, p, h, g) > lim(c.limits_tp.get((t, p), 0.0) if c else 0.0) + tol:
                    bad("coop", f"cooperation per step and procedure violated at {(t, p, h, g)}")
            if sum(yb(t, p, h, g) for p in P) > lim(c.limits_t.get(t, 0.0) if c else 0.0) + tol:
                bad("coop", f"cooperation per step violated at {(t, h, g)}")
        for p in P:
            if sum(yb(t, p, h, g) for t in T) > lim(c.limits_p.get(p, 0.0) if c else 0.0) + tol:
                bad("coop", f"cooperation per procedure violated at {(p, h, g)}")
        if sum(yb(t, p, h, g) for t in T for p in P) > lim(c.limit_total if c else 0.0) + tol:
            bad("coop", f"cooperation total violated at {(h, g)}")

    for h in H:
        on = h in delta.backup and "backup" in inst.allowed
        b = inst.backup.get(h)

        def blim(val):
            return val if (on and b is not None) else 0.0

        for t in T:
            if zo(t, h) > blim(b.limits_t.get(t, 0.0) if b else 0.0) + tol:
                bad("backup", f"backup per step violated at {(t, h)}")
            for p in P:
                if zp(t, p, h) > blim(b.limits_tp.get((t, p), 0.0) if b else 0.0) + tol:
                    bad("backup", f"backup per step and procedure violated at {(t, p, h)}")
            if sum(zp(t, p, h) for p in P) > zo(t, h) + tol:
                bad("backup", f"backup consistency violated at {(t, h)}")
        if sum(zo(t, h) for t in T) > blim(b.limit_total if b else 0.0) + tol:
            bad("backup", f"backup total violated at {h}")
    return out


# --------------------------------------------------------------------------
# first-stage decision space


def decision_cost(inst: Instance, delta: FirstStageDecision) -> float:
    cost = sum(inst.cooperation[pair].cost for pair in sorted(delta.coop))
    cost += sum(inst.backup[h].cost for h in sorted(delta.backup))
    for cid, lid in sorted(delta.controls):
        cost += inst.control(cid).level(lid).cost
    return float(cost)


def decision_violations(inst: Instance, delta: FirstStageDecision) -> list[str]:
    msgs = []
    for pair in delta.coop:
        if pair not in inst.cooperation:
            msgs.append(f"unknown cooperation pair {pair!r}")
    for h in delta.backup:
        if h not in inst.backup:
            msgs.append(f"no backup catalog entry for {h!r}")
    per_control: dict[str, int] = {}
    for cid, lid in delta.controls:
        per_control[cid] = per_control.get(cid, 0) + 1
        try:
            inst.control(cid).level(lid)
        except KeyError as exc:
            msgs.append(str(exc))
    msgs += [f"control {c!r} deployed at {n} levels" for c, n in per_control.items() if n > 1]
    if delta.coop and "coop" not in inst.allowed:
        msgs.append("cooperation is forbidden by the policy")
    if delta.backup and "backup" not in inst.allowed:
        msgs.append("backups are forbidden by the policy")
    if delta.controls and "control" not in inst.allowed:
        msgs.append("controls are forbidden by the policy")
    if not msgs and decision_cost(inst, delta) > inst.budgets.defender + 1e-7:
        msgs.append(f"cost {decision_cost(inst, delta)} exceeds budget {inst.budgets.defender}")
    return msgs


def is_feasible_decision(inst: Instance, delta: FirstStageDecision) -> bool:
    return not decision_violations(inst, delta)


def decision_space_size(inst: Instance) -> int:
    """Number of candidate vectors before the budget filter."""
    n = 1
    if "coop" in inst.allowed:
        n *= 2 ** len(inst.cooperation)
    if "backup" in inst.allowed:
        n *= 2 ** len(inst.backup)
    if "control" in inst.allowed:
        for c in inst.controls:
            n *= len(c.levels) + 1
    return n


def enumerate_decisions(inst: Instance, limit: int = 2**16) -> Iterator[FirstStageDecision]:
    """Budget-feasible first-stage decisions in a fixed order, empty decision first."""
    size = decision_space_size(inst)
    if size > limit:
        raise LimitExceededError(f"decision space has {size} candidates (limit {limit})")
    pairs = sorted(inst.cooperation) if "coop" in inst.allowed else []
    hosps = sorted(inst.backup) if "backup" in inst.allowed else []
    ctrls = list(inst.controls) if "control" in inst.allowed else []
    level_choices = [[None] + [lvl.id for lvl in c.levels] for c in ctrls]
    for coop_bits in itertools.product((0, 1), repeat=len(pairs)):
        coop = frozenset(pr for pr, b in zip(pairs, coop_bits) if b)
        for backup_bits in itertools.product((0, 1), repeat=len(hosps)):
            backup = frozenset(h for h, b in zip(hosps, backup_bits) if b)
            for levels in itertools.product(*level_choices):
                controls = frozenset((c.id, lid) for c, lid in zip(ctrls, levels) if lid is not None)
                delta = FirstStageDecision(coop, backup, controls)
                if decision_cost(inst, delta) <= inst.budgets.defender + 1e-7:
                    yield delta


def policy_restrict(inst: Instance, policy: int) -> Instance:
    """Forbid the decision classes a policy excludes; budgets and data are kept."""
    if policy not in POLICIES:
        raise ValueError(f"policy must be in 0..7, got {policy!r}")
    return replace(inst, allowed=inst.allowed & POLICIES[policy])
