import pytest

from dadres.attackgraph import AttackGraph, Edge
from dadres.backend import HighsBackend
from dadres.core import (
    Backup,
    Budgets,
    Control,
    ControlLevel,
    Cooperation,
    Instance,
    ObjectiveConfig,
    Procedure,
)
from dadres.gen import GenConfig


def chain_graph(scores=(1.0, 2.0), impacts=None):
    """r -> v1 -> v2 ..., one edge per score; the last vertex is the target."""
    verts = ["r"] + [f"v{i + 1}" for i in range(len(scores))]
    edges = tuple(Edge(verts[i], verts[i + 1], "k1", s) for i, s in enumerate(scores))
    return AttackGraph(tuple(verts), "r", frozenset({verts[-1]}), edges, impacts or {})


def parallel_graph(scores=(1.0, 1.0)):
    edges = tuple(Edge("r", "v1", f"k{i + 1}", s) for i, s in enumerate(scores))
    return AttackGraph(("r", "v1"), "r", frozenset({"v1"}), edges, {})


def make_instance(
    hospitals=("A", "B"),
    tau=2,
    x=2.0,
    u=4.0,
    window=1,
    graph=None,
    rate=0.5,
    b_att=1.0,
    b_def=0.0,
    coop=False,
    backup=False,
    controls=(),
    objective=None,
    tau_ub=None,
):
    """Two-hospital, one-procedure instance hit through a one-edge graph r -> v.

    Reaching ``v`` cuts hospital A's procedure capacity to ``rate`` of ``u``.
    """
    T = range(tau + 1)
    if graph is None:
        graph = AttackGraph(("r", "v"), "r", frozenset({"v"}), (Edge("r", "v", "k1", 1.0),), {("v", "p", "A"): rate})
    plan = {(t, "p", h): x for t in T for h in hospitals}
    cap_p = {(t, "p", h): u for t in T for h in hospitals}
    cap_o = {(t, h): u for t in T for h in hospitals}
    coops = {}
    if coop:
        for h in hospitals:
            for g in hospitals:
                if h != g:
                    coops[h, g] = Cooperation(
                        cost=1.0,
                        limit_total=100.0,
                        limits_tp={(t, "p"): 100.0 for t in T},
                        limits_p={"p": 100.0},
                        limits_t={t: 100.0 for t in T},
                        lags={"p": 0},
                    )
    backups = {}
    if backup:
        for h in hospitals:
            backups[h] = Backup(
                cost=1.0,
                limit_total=100.0,
                limits_t={t: 100.0 for t in T},
                limits_tp={(t, "p"): 100.0 for t in T},
            )
    return Instance(
        hospitals=tuple(hospitals),
        procedures=(Procedure("p", window),),
        tau=tau,
        tau_ub=tau if tau_ub is None else tau_ub,
        plan=plan,
        cap_overall=cap_o,
        cap_procedure=cap_p,
        cooperation=coops,
        backup=backups,
        controls=tuple(controls),
        attack_graph=graph,
        budgets=Budgets(b_def, b_att),
        objective=objective or ObjectiveConfig(),
    )


def blocking_control(cost=1.0, inc=5.0, edge=("r", "v", "k1")):
    return Control("C", (ControlLevel("L1", cost, {edge: inc}),))


# small generated instances used across modules; budgets loose enough for real attacks
TINY = GenConfig(rho_att=0.3, rho_def=0.3, tau=4, n_edges=7)


@pytest.fixture(scope="session")
def backend():
    return HighsBackend()
