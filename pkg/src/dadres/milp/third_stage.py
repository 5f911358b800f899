"""Third-stage (replanning) models: the response LP under a fixed recovery
time pair and the exact mixed-integer version with recovery indicators.

The same block builder feeds the master problem, where the first-stage
choices are variables instead of constants.
"""

from __future__ import annotations

from dataclasses import dataclass

from dadres.attackgraph import AttackScenario
from dadres.core import FirstStageDecision, Instance, ResponsePlan
from dadres.milp.model import BINARY, EQ, GE, LE, MilpModel

# A recovery fix pins the recovery time of (delay, unmet); None stands for "never".
RecoveryFix = tuple["int | None", "int | None"]
INF_FIX: RecoveryFix = (None, None)


def attack_param(v: str) -> str:
    return f"a[{v}]"


@dataclass
class DeltaVars:
    """Names of first-stage decision columns in a master model."""

    coop: dict[tuple[str, str], str]
    backup: dict[str, str]
    control: dict[tuple[str, str], str]


@dataclass
class Block:
    prefix: str
    objective: dict[str, float]
    constant: float


def curve_big_m(inst: Instance) -> float:
    """Upper bound on any curve value minus its threshold, for the recovery rows."""
    return inst.total_plan() + 1.0


def check_recovery_fix(inst: Instance, fix: RecoveryFix) -> None:
    for t in fix:
        if t is not None and (not isinstance(t, int) or t < 0 or t > inst.tau):
            raise ValueError(f"recovery fix component {t!r} outside T and not infinite")


def add_response_block(
    model: MilpModel,
    inst: Instance,
    *,
    delta: FirstStageDecision | None = None,
    delta_vars: DeltaVars | None = None,
    attack: AttackScenario | None = None,
    recovery: RecoveryFix | str = INF_FIX,
    prefix: str = "",
) -> Block:
    """Add response columns and rows to ``model`` and return its objective.

    Exactly one of ``delta`` (constants) and ``delta_vars`` (master columns)
    is given. With ``attack=None`` the impact rows keep their right-hand side
    symbolic in the attack parameters ``a[v]``. ``recovery`` is either a fixed
    pair or the string ``"binary"`` for indicator variables.
    """
    if (delta is None) == (delta_vars is None):
        raise ValueError("pass exactly one of delta and delta_vars")
    obj = inst.objective
    T, P, H = list(inst.times), inst.procedure_ids, inst.hospitals
    tau = inst.tau
    M = inst.recovery_penalty
    win = inst.completion

    def var(sym, idx, **kw):
        return model.add_var(sym, idx, prefix=prefix, **kw)

    def row(coeffs, sense, rhs, tag, idx=(), params=None):
        return model.add_constraint(coeffs, sense, rhs, tag, idx, params, prefix=prefix)

    y = {(t, p, h): var("y", (t, p, h)) for t in T for p in P for h in H}
    yb = {(t, p, h, g): var("ybar", (t, p, h, g)) for t in T for p in P for (h, g) in inst.pairs}
    zo = {(t, h): var("z_overall", (t, h)) for t in T for h in H}
    zp = {(t, p, h): var("z_procedure", (t, p, h)) for t in T for p in P for h in H}
    U = {(t, p): var("unmet_aux", (t, p)) for t in T for p in P}
    eps_d = var("res_delay_epi", ())
    eps_u = var("res_unmet_epi", ())

    cum_x = {}
    for t in T:
        cum_x[t] = sum(inst.x(th, p, h) for th in range(t + 1) for p in P for h in H)

    def add(d, k, v):
        d[k] = d.get(k, 0.0) + v

    # cumulative balance with lagged incoming transfers
    for t in T:
        for p in P:
            for h in H:
                co: dict[str, float] = {}
                for th in range(t + 1):
                    add(co, y[th, p, h], 1.0)
                    for g in H:
                        if g != h:
                            add(co, yb[th, p, h, g], 1.0)
                for g in H:
                    if g == h:
                        continue
                    for th in range(0, t - inst.lag(p, g, h) + 1):
                        add(co, yb[th, p, g, h], -1.0)
                rhs = sum(inst.x(th, p, h) for th in range(t + 1))
                row(co, LE, rhs, "balance", (t, p, h))

    for t in T:
        for h in H:
            co = {y[t, p, h]: 1.0 for p in P}
            co[zo[t, h]] = -1.0
            row(co, LE, inst.u_overall(t, h), "cap_overall", (t, h))
            for p in P:
                row({y[t, p, h]: 1.0, zp[t, p, h]: -1.0}, LE, inst.u(t, p, h), "cap_procedure", (t, p, h))

    # cooperation limits, switched by the first-stage choice
    def switched(coeffs, limit, dname, on, tag, idx):
        if delta_vars is not None:
            if dname is None or limit == 0:
                row(coeffs, LE, 0.0, tag, idx)
            else:
                co = dict(coeffs)
                co[dname] = co.get(dname, 0.0) - limit
                row(co, LE, 0.0, tag, idx)
        else:
            row(coeffs, LE, limit if on else 0.0, tag, idx)

    for h, g in inst.pairs:
        c = inst.cooperation.get((h, g))
        on = delta is not None and c is not None and "coop" in inst.allowed and (h, g) in delta.coop
        dname = delta_vars.coop.get((h, g)) if delta_vars is not None else None
        for t in T:
            for p in P:
                lim = c.limits_tp.get((t, p), 0.0) if c else 0.0
                switched({yb[t, p, h, g]: 1.0}, lim, dname, on, "coop_tp", (t, p, h, g))
        for p in P:
            lim = c.limits_p.get(p, 0.0) if c else 0.0
            switched({yb[t, p, h, g]: 1.0 for t in T}, lim, dname, on, "coop_p", (p, h, g))
        for t in T:
            lim = c.limits_t.get(t, 0.0) if c else 0.0
            switched({yb[t, p, h, g]: 1.0 for p in P}, lim, dname, on, "coop_t", (t, h, g))
        lim = c.limit_total if c else 0.0
        switched({yb[t, p, h, g]: 1.0 for t in T for p in P}, lim, dname, on, "coop_total", (h, g))

    for h in H:
        b = inst.backup.get(h)
        on = delta is not None and b is not None and "backup" in inst.allowed and h in delta.backup
        dname = delta_vars.backup.get(h) if delta_vars is not None else None
        for t in T:
            switched({zo[t, h]: 1.0}, b.limits_t.get(t, 0.0) if b else 0.0, dname, on, "backup_t", (t, h))
        for t in T:
            for p in P:
                lim = b.limits_tp.get((t, p), 0.0) if b else 0.0
                switched({zp[t, p, h]: 1.0}, lim, dname, on, "backup_tp", (t, p, h))
        for t in T:
            co = {zp[t, p, h]: 1.0 for p in P}
            co[zo[t, h]] = -1.0
            row(co, LE, 0.0, "backup_link", (t, h))
        switched({zo[t, h]: 1.0 for t in T}, b.limit_total if b else 0.0, dname, on, "backup_total", (h,))

    # capacity impact of reached targets during the downtime window
    graph = inst.attack_graph
    reached = (attack.vertices | {graph.root}) if attack is not None else None
    for t in T:
        if t > inst.tau_ub:
            break
        for p in P:
            for h in H:
                u = inst.u(t, p, h)
                for v, s in sorted(graph.targets_for(p, h).items()):
                    co = {y[t, p, h]: 1.0, zp[t, p, h]: -1.0}
                    if reached is None:
                        model.parameters.add(attack_param(v))
                        row(co, LE, u, "impact", (t, p, h, v), params={attack_param(v): (s - 1.0) * u})
                    else:
                        row(co, LE, s * u if v in reached else u, "impact", (t, p, h, v))

    # unmet auxiliaries: U >= overdue plan minus service in the window (U >= 0 by bound)
    for t in T:
        for p in P:
            start = t - win[p] - 1
            co = {U[t, p]: 1.0}
            for th in range(max(start, 0), t):
                for h in H:
                    add(co, y[th, p, h], 1.0)
            due = sum(inst.x(start, p, h) for h in H)
            row(co, GE, due, "unmet_link", (t, p))

    # resistance epigraphs: eps_d >= f_delay(t), eps_u >= f_unmet(t)
    for t in T:
        co = {eps_d: 1.0}
        for th in range(t + 1):
            for p in P:
                for h in H:
                    add(co, y[th, p, h], 1.0)
        row(co, GE, cum_x[t], "res_delay", (t,))
        co = {eps_u: 1.0}
        for p in P:
            co[U[t, p]] = -1.0
        row(co, GE, 0.0, "res_unmet", (t,))

    # objective: loss + resistance + recovery
    lin: dict[str, float] = {}
    const = obj.w_loss_delay * sum(cum_x.values())
    for t in T:
        for p in P:
            for h in H:
                add(lin, y[t, p, h], -obj.w_loss_delay * (tau - t + 1))
            add(lin, U[t, p], obj.w_loss_unmet)
    add(lin, eps_d, obj.w_res_delay)
    add(lin, eps_u, obj.w_res_unmet)

    def delay_rows(theta):
        co: dict[str, float] = {}
        for th in range(theta + 1):
            for p in P:
                for h in H:
                    add(co, y[th, p, h], 1.0)
        return co

    if recovery == "binary":
        big = curve_big_m(inst)
        bd = {t: var("b_delay", (t,), kind=BINARY) for t in T}
        bd_inf = var("b_delay_inf", (), kind=BINARY)
        bu = {t: var("b_unmet", (t,), kind=BINARY) for t in T}
        bu_inf = var("b_unmet_inf", (), kind=BINARY)
        for t in T:
            for th in range(t, tau + 1):
                # f_delay(th) <= kappa + big (1 - b_t)
                co = {k: -v for k, v in delay_rows(th).items()}
                co[bd[t]] = big
                row(co, LE, obj.kappa_delay + big - cum_x[th], "rec_delay", (t, th))
                co = {U[th, p]: 1.0 for p in P}
                co[bu[t]] = big
                row(co, LE, obj.kappa_unmet + big, "rec_unmet", (t, th))
        row({**{bd[t]: 1.0 for t in T}, bd_inf: 1.0}, EQ, 1.0, "rec_choice", ("delay",))
        row({**{bu[t]: 1.0 for t in T}, bu_inf: 1.0}, EQ, 1.0, "rec_choice", ("unmet",))
        for t in T:
            add(lin, bd[t], obj.w_rec_delay * t)
            add(lin, bu[t], obj.w_rec_unmet * t)
        add(lin, bd_inf, obj.w_rec_delay * M)
        add(lin, bu_inf, obj.w_rec_unmet * M)
    else:
        check_recovery_fix(inst, recovery)
        t_d, t_u = recovery
        if t_d is not None:
            for th in range(t_d, tau + 1):
                row(delay_rows(th), GE, cum_x[th] - obj.kappa_delay, "rec_delay", (th,))
        if t_u is not None:
            for th in range(t_u, tau + 1):
                row({U[th, p]: 1.0 for p in P}, LE, obj.kappa_unmet, "rec_unmet", (th,))
        const += obj.w_rec_delay * (M if t_d is None else t_d)
        const += obj.w_rec_unmet * (M if t_u is None else t_u)

    return Block(prefix, lin, const)


def build_third_stage_lp(
    inst: Instance,
    delta: FirstStageDecision,
    attack: AttackScenario | None,
    recovery_fix: RecoveryFix = INF_FIX,
) -> MilpModel:
    """Response LP with recovery times pinned; ``attack=None`` keeps impacts symbolic."""
    check_recovery_fix(inst, recovery_fix)
    model = MilpModel(name="third_stage_lp", sense="min")
    blk = add_response_block(model, inst, delta=delta, attack=attack, recovery=recovery_fix)
    model.add_objective(blk.objective, blk.constant)
    return model


def build_third_stage_milp(inst: Instance, delta: FirstStageDecision, attack: AttackScenario) -> MilpModel:
    """Exact response problem: recovery times chosen through indicator binaries."""
    model = MilpModel(name="third_stage_milp", sense="min")
    blk = add_response_block(model, inst, delta=delta, attack=attack, recovery="binary")
    model.add_objective(blk.objective, blk.constant)
    return model


def extract_plan(model: MilpModel, values: dict[str, float], prefix: str = "", eps: float = 1e-9) -> ResponsePlan:
    plan = ResponsePlan()
    targets = {
        "y": plan.y,
        "ybar": plan.ybar,
        "z_overall": plan.z_overall,
        "z_procedure": plan.z_procedure,
    }
    for name, v in model.variables.items():
        if v.symbol in targets and name.startswith(prefix) and name[len(prefix):].startswith(v.symbol + "["):
            val = values.get(name, 0.0)
            if val > eps:
                targets[v.symbol][v.index] = float(val)
    return plan


def selected_recovery(model: MilpModel, values: dict[str, float], inst: Instance, prefix: str = "") -> tuple[float, float]:
    """Recovery times picked by the indicator binaries of a binary-recovery block."""
    out = []
    for curve in ("delay", "unmet"):
        chosen = [
            v.index[0]
            for name, v in model.variables.items()
            if v.symbol == f"b_{curve}" and name.startswith(prefix) and values.get(name, 0.0) > 0.5
        ]
        out.append(float(chosen[0]) if chosen else inst.recovery_penalty)
    return out[0], out[1]
