"""Attacker subproblem: attack constraints plus the dual of the response LP.

Products of attack binaries and dual values are linearized with a big-M
envelope whose constant is validated after the solve (see ``dadres.ccg``).
"""

from __future__ import annotations

from dadres.attackgraph import AttackScenario, effective_scores
from dadres.core import FirstStageDecision, Instance
from dadres.milp.dual import dualize_parametric
from dadres.milp.model import BINARY, CONTINUOUS, EQ, GE, LE, MilpModel
from dadres.milp.third_stage import INF_FIX, RecoveryFix, attack_param, build_third_stage_lp

DEFAULT_BIG_M_Q = 1e4


def add_attack_block(model: MilpModel, inst: Instance, delta: FirstStageDecision) -> dict[str, str]:
    """Arborescence flow formulation with the attacker budget under ``delta``.

    Returns the map from vertex id to its selection column.
    """
    graph = inst.attack_graph
    scores = effective_scores(inst, delta)
    root = graph.root
    n = len(graph.vertices)
    a_v = {}
    for v in graph.vertices:
        lb = 1.0 if v == root else 0.0
        a_v[v] = model.add_var("a_vertex", (v,), BINARY, lb=lb)
    a_e = {e.id: model.add_var("a_edge", e.id, BINARY) for e in graph.edges}
    flow = {e.id: model.add_var("a_flow", e.id, CONTINUOUS) for e in graph.edges}
    others = [v for v in graph.vertices if v != root]

    for e in graph.edges:
        model.add_constraint({a_e[e.id]: 1.0, a_v[e.src]: -1.0}, LE, 0.0, "edge_endpoint", e.id + ("src",))
        model.add_constraint({a_e[e.id]: 1.0, a_v[e.dst]: -1.0}, LE, 0.0, "edge_endpoint", e.id + ("dst",))
    co = {a_e[e.id]: 1.0 for e in graph.edges}
    for v in others:
        co[a_v[v]] = co.get(a_v[v], 0.0) - 1.0
    model.add_constraint(co, EQ, 0.0, "edge_count")
    co = {flow[e.id]: 1.0 for e in graph.edges if e.src == root}
    for v in others:
        co[a_v[v]] = co.get(a_v[v], 0.0) - 1.0
    model.add_constraint(co, EQ, 0.0, "root_outflow")
    for e in graph.edges:
        model.add_constraint({flow[e.id]: 1.0, a_e[e.id]: -(n - 1.0)}, LE, 0.0, "flow_on_edge", e.id)
    for v in others:
        co = {}
        for e in graph.edges:
            if e.dst == v:
                co[flow[e.id]] = co.get(flow[e.id], 0.0) + 1.0
            if e.src == v:
                co[flow[e.id]] = co.get(flow[e.id], 0.0) - 1.0
        co[a_v[v]] = co.get(a_v[v], 0.0) - 1.0
        model.add_constraint(co, EQ, 0.0, "flow_balance", (v,))
    model.add_constraint(
        {a_e[e.id]: scores[e.id] for e in graph.edges}, LE, inst.budgets.attacker, "att_budget"
    )
    return a_v


def build_subproblem_milp(
    inst: Instance,
    delta: FirstStageDecision,
    recovery_fix: RecoveryFix = INF_FIX,
    big_m_q: float = DEFAULT_BIG_M_Q,
) -> MilpModel:
    """Maximize the response LP's dual value over valid, affordable attacks."""
    lp = build_third_stage_lp(inst, delta, None, recovery_fix)
    model = dualize_parametric(lp)
    model.name = "subproblem"
    model.meta["big_m_q"] = big_m_q
    model.meta["recovery_fix"] = recovery_fix
    a_v = add_attack_block(model, inst, delta)
    by_param = {attack_param(v): col for v, col in a_v.items()}
    for b in model.bilinear:
        a = by_param[b.param]
        eta = model.variables[b.var]
        q = model.add_var("q", eta.index)
        model.add_constraint({q: 1.0, a: -big_m_q}, LE, 0.0, "q_le_a", eta.index)
        model.add_constraint({q: 1.0, b.var: -1.0}, LE, 0.0, "q_le_eta", eta.index)
        model.add_constraint({q: 1.0, b.var: -1.0, a: -big_m_q}, GE, -big_m_q, "q_ge", eta.index)
        model.objective[q] = model.objective.get(q, 0.0) + b.coeff
    model.bilinear = []
    model.parameters = set()
    return model


def extract_attack(model: MilpModel, values: dict[str, float], inst: Instance) -> AttackScenario:
    edges = [v.index for name, v in model.variables.items() if v.symbol == "a_edge" and values.get(name, 0.0) > 0.5]
    return AttackScenario.from_edges(inst.attack_graph, edges)
