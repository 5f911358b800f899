"""Master problem over a finite set of attack scenarios."""

from __future__ import annotations

from dadres.attackgraph import AttackScenario
from dadres.core import FirstStageDecision, Instance
from dadres.milp.model import BINARY, GE, LE, MilpModel
from dadres.milp.third_stage import DeltaVars, add_response_block

# feas_k is forced to 0 once the attack costs at least B^att + this
EPS_STRICT = 1e-4


def value_big_m(inst: Instance) -> float:
    """Upper bound on the weighted objective of the do-nothing response."""
    obj = inst.objective
    total = inst.total_plan()
    n_t = inst.tau + 1
    return (
        obj.w_loss_delay * n_t * total
        + obj.w_loss_unmet * n_t * total
        + (obj.w_rec_delay + obj.w_rec_unmet) * inst.recovery_penalty
        + (obj.w_res_delay + obj.w_res_unmet) * total
        + 1.0
    )


def add_decision_vars(model: MilpModel, inst: Instance) -> DeltaVars:
    dv = DeltaVars({}, {}, {})
    if "coop" in inst.allowed:
        for pair in sorted(inst.cooperation):
            dv.coop[pair] = model.add_var("d_coop", pair, BINARY)
    if "backup" in inst.allowed:
        for h in sorted(inst.backup):
            dv.backup[h] = model.add_var("d_backup", (h,), BINARY)
    if "control" in inst.allowed:
        for c in inst.controls:
            for lvl in c.levels:
                dv.control[c.id, lvl.id] = model.add_var("d_control", (c.id, lvl.id), BINARY)
    cost = {}
    for pair, name in dv.coop.items():
        cost[name] = inst.cooperation[pair].cost
    for h, name in dv.backup.items():
        cost[name] = inst.backup[h].cost
    for (cid, lid), name in dv.control.items():
        cost[name] = inst.control(cid).level(lid).cost
    model.add_constraint(cost, LE, inst.budgets.defender, "def_budget")
    for c in inst.controls:
        cols = {dv.control[c.id, lvl.id]: 1.0 for lvl in c.levels if (c.id, lvl.id) in dv.control}
        if cols:
            model.add_constraint(cols, LE, 1.0, "one_level", (c.id,))
    return dv


def build_master(inst: Instance, scenarios: list[AttackScenario]) -> MilpModel:
    model = MilpModel(name="master", sense="min")
    dv = add_decision_vars(model, inst)
    r = model.add_var("master_epigraph", ())
    model.add_objective({r: 1.0})
    big_r = value_big_m(inst)
    budget = inst.budgets.attacker
    edge_scores = {e.id: e.score for e in inst.attack_graph.edges}
    blocks = []
    for k, att in enumerate(scenarios):
        prefix = f"s{k}:"
        blk = add_response_block(model, inst, delta_vars=dv, attack=att, recovery="binary", prefix=prefix)
        blocks.append(blk)
        feas = model.add_var("feas", (k,), BINARY)
        base = sum(edge_scores[e] for e in sorted(att.edges))
        inc: dict[str, float] = {}
        for (cid, lid), name in dv.control.items():
            extra = sum(inst.control(cid).level(lid).effects.get(e, 0.0) for e in sorted(att.edges))
            if extra:
                inc[name] = extra
        # cost <= B  =>  feas = 1:   cost >= (B + eps)(1 - feas)
        co = dict(inc)
        co[feas] = budget + EPS_STRICT
        model.add_constraint(co, GE, budget + EPS_STRICT - base, "feas_hi", (k,))
        # feas = 1  =>  cost <= B + eps (costs strictly inside the gap count as affordable)
        top = base + sum(
            max([inc.get(dv.control[c.id, lvl.id], 0.0) for lvl in c.levels if (c.id, lvl.id) in dv.control] + [0.0])
            for c in inst.controls
        )
        big_c = max(0.0, top - budget - EPS_STRICT)
        co = dict(inc)
        co[feas] = big_c
        model.add_constraint(co, LE, budget + EPS_STRICT - base + big_c, "feas_lo", (k,))
        # r >= R_k - M_R (1 - feas)
        co = {name: -c for name, c in blk.objective.items()}
        co[r] = 1.0
        co[feas] = -big_r
        model.add_constraint(co, GE, blk.constant - big_r, "master_epigraph", (k,))
    model.meta["decision_vars"] = dv
    model.meta["blocks"] = blocks
    return model


def extract_decision(model: MilpModel, values: dict[str, float]) -> FirstStageDecision:
    dv: DeltaVars = model.meta["decision_vars"]
    on = lambda name: values.get(name, 0.0) > 0.5  # noqa: E731
    return FirstStageDecision(
        coop=frozenset(p for p, n in dv.coop.items() if on(n)),
        backup=frozenset(h for h, n in dv.backup.items() if on(n)),
        controls=frozenset(cl for cl, n in dv.control.items() if on(n)),
    )
