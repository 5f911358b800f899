"""Attack graphs, attack validity, exploitability and capacity impact.

An attack graph is a directed multigraph over attacker privilege states.
Edges are identified by the triple ``(src, dst, key)``; the key separates
parallel actions between the same pair of states. An attack is a subgraph
rooted at the initial privilege state in which every other selected state
is reached by exactly one path, i.e. an arborescence.
"""

from __future__ import annotations

from collections import defaultdict, deque
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable, Mapping

if TYPE_CHECKING:
    from dadres.core import FirstStageDecision, Instance

EdgeId = tuple[str, str, str]

# Costs live on a 1e-3 grid in files; sums of floats drift by ~1e-15.
COST_TOL = 1e-7


class UnknownIdError(KeyError):
    """An attack or query references an id absent from the graph."""


@dataclass(frozen=True)
class Edge:
    src: str
    dst: str
    key: str
    score: float

    @property
    def id(self) -> EdgeId:
        return (self.src, self.dst, self.key)


@dataclass(frozen=True)
class AttackGraph:
    vertices: tuple[str, ...]
    root: str
    targets: frozenset[str]
    edges: tuple[Edge, ...]
    # (vertex, procedure, hospital) -> impact rate in [0, 1]
    impacts: Mapping[tuple[str, str, str], float] = field(default_factory=dict)

    def edge(self, eid: EdgeId) -> Edge:
        try:
            return self._edge_index[eid]
        except KeyError:
            raise UnknownIdError(f"unknown edge {eid!r}") from None

    def has_edge(self, eid: EdgeId) -> bool:
        return eid in self._edge_index

    @property
    def edge_ids(self) -> list[EdgeId]:
        return [e.id for e in self.edges]

    @property
    def _edge_index(self) -> dict[EdgeId, Edge]:
        # cached lazily on the frozen instance
        idx = self.__dict__.get("_eidx")
        if idx is None:
            idx = {e.id: e for e in self.edges}
            object.__setattr__(self, "_eidx", idx)
        return idx

    def out_edges(self, v: str) -> list[Edge]:
        adj = self.__dict__.get("_out")
        if adj is None:
            adj = defaultdict(list)
            for e in sorted(self.edges, key=lambda e: e.id):
                adj[e.src].append(e)
            object.__setattr__(self, "_out", adj)
        return adj.get(v, [])

    def targets_for(self, p: str, h: str) -> dict[str, float]:
        """Targets in V*_{p,h} with their impact rates."""
        return {v: s for (v, pp, hh), s in self.impacts.items() if pp == p and hh == h}


@dataclass(frozen=True)
class AttackScenario:
    edges: frozenset[EdgeId]
    vertices: frozenset[str]
    flows: Mapping[EdgeId, float] = field(default_factory=dict, compare=False, hash=False)

    @classmethod
    def empty(cls, graph: AttackGraph) -> AttackScenario:
        return cls(frozenset(), frozenset({graph.root}), {})

    @classmethod
    def from_edges(cls, graph: AttackGraph, edges: Iterable[EdgeId]) -> AttackScenario:
        """Build a scenario from an edge set; vertices are the root plus all endpoints.

        Flows (number of root paths through each edge) are filled in when the
        edge set forms an arborescence and left empty otherwise.
        """
        edges = frozenset(tuple(e) for e in edges)
        for eid in edges:
            graph.edge(eid)
        verts = {graph.root}
        for s, d, _ in edges:
            verts.update((s, d))
        att = cls(edges, frozenset(verts), {})
        ok, _ = validate_attack(graph, att)
        if ok:
            object.__setattr__(att, "flows", _subtree_flows(graph.root, edges))
        return att

    @property
    def canonical(self) -> tuple[EdgeId, ...]:
        return tuple(sorted(self.edges))

    def reached(self, graph: AttackGraph) -> frozenset[str]:
        return (self.vertices | {graph.root}) & graph.targets

    def to_dict(self) -> dict:
        return {
            "edges": [{"from": s, "to": d, "key": k} for s, d, k in self.canonical],
            "vertices": sorted(self.vertices),
            "flows": [
                {"edge": list(e), "value": self.flows[e]} for e in sorted(self.flows)
            ],
        }

    @classmethod
    def from_dict(cls, graph: AttackGraph, data: Mapping) -> AttackScenario:
        edges = [(e["from"], e["to"], e["key"]) for e in data.get("edges", [])]
        att = cls.from_edges(graph, edges)
        verts = frozenset(data.get("vertices", att.vertices)) | {graph.root}
        return cls(att.edges, verts, att.flows)


def _subtree_flows(root: str, edges: frozenset[EdgeId]) -> dict[EdgeId, float]:
    children = defaultdict(list)
    for e in edges:
        children[e[0]].append(e)

    def size(v: str) -> int:
        return 1 + sum(size(e[1]) for e in children[v])

    return {e: float(size(e[1])) for e in edges}


def validate_attack(graph: AttackGraph, att: AttackScenario) -> tuple[bool, str]:
    """Check that every selected non-root state has exactly one root path.

    Paths are counted by dynamic programming over a topological order of the
    selected subgraph. Any directed cycle among selected states fails: states
    on a reachable cycle have unboundedly many walks, states on an unreachable
    one have none. Returns ``(ok, diagnostic)``; the diagnostic names the
    first offending vertex in sorted order.
    """
    for v in att.vertices:
        if v not in graph.vertices:
            raise UnknownIdError(f"unknown vertex {v!r}")
    for eid in att.edges:
        graph.edge(eid)

    selected = set(att.vertices) | {graph.root}
    for s, d, k in sorted(att.edges):
        for v in (s, d):
            if v not in selected:
                return False, f"edge {(s, d, k)} uses unselected vertex {v!r}"

    indeg = {v: 0 for v in selected}
    succ = defaultdict(list)
    for s, d, _ in att.edges:
        succ[s].append(d)
        indeg[d] += 1

    order = []
    queue = deque(sorted(v for v in selected if indeg[v] == 0))
    remaining = dict(indeg)
    while queue:
        v = queue.popleft()
        order.append(v)
        for w in succ[v]:
            remaining[w] -= 1
            if remaining[w] == 0:
                queue.append(w)
    if len(order) < len(selected):
        on_cycle = sorted(v for v in selected if v not in set(order))
        return False, f"vertex {on_cycle[0]!r} lies on or behind a cycle"

    paths = {v: 0 for v in selected}
    paths[graph.root] = 1
    for v in order:
        for w in succ[v]:
            paths[w] += paths[v]
    for v in sorted(selected - {graph.root}):
        if paths[v] != 1:
            return False, f"vertex {v!r} has {paths[v]} root paths"
    if paths[graph.root] != 1:
        return False, f"root {graph.root!r} has an incoming selected edge"
    return True, ""


def check_flow_system(graph: AttackGraph, att: AttackScenario, tol: float = 1e-9) -> bool:
    """Evaluate the node/edge linking and path-flow constraints on (a, a_bar).

    This is the mixed-integer encoding of attack validity, checked on concrete
    values; it is used to cross-check :func:`validate_attack`.
    """
    a_v = {v: 1 if (v in att.vertices or v == graph.root) else 0 for v in graph.vertices}
    a_e = {e.id: 1 if e.id in att.edges else 0 for e in graph.edges}
    flow = {e.id: float(att.flows.get(e.id, 0.0)) for e in graph.edges}
    n_sel = sum(a_v[v] for v in graph.vertices if v != graph.root)
    nv = len(graph.vertices)

    for e in graph.edges:
        if a_e[e.id] > a_v[e.src] or a_e[e.id] > a_v[e.dst]:
            return False
        if flow[e.id] < -tol or flow[e.id] > (nv - 1) * a_e[e.id] + tol:
            return False
    if sum(a_e.values()) != n_sel:
        return False
    root_out = sum(flow[e.id] for e in graph.edges if e.src == graph.root)
    if abs(root_out - n_sel) > tol:
        return False
    for v in graph.vertices:
        if v == graph.root:
            continue
        inflow = sum(flow[e.id] for e in graph.edges if e.dst == v)
        outflow = sum(flow[e.id] for e in graph.edges if e.src == v)
        if abs(inflow - outflow - a_v[v]) > tol:
            return False
    return True


def effective_scores(inst: Instance, delta: FirstStageDecision) -> dict[EdgeId, float]:
    """Exploitability of every edge after the controls deployed by ``delta``."""
    scores = {e.id: e.score for e in inst.attack_graph.edges}
    chosen = delta.control_levels
    for ctrl in inst.controls:
        lvl_id = chosen.get(ctrl.id)
        if lvl_id is None:
            continue
        for eid, inc in ctrl.level(lvl_id).effects.items():
            scores[eid] += inc
    return scores


def effective_exploitability(inst: Instance, eid: EdgeId, delta: FirstStageDecision) -> float:
    inst.attack_graph.edge(eid)
    return effective_scores(inst, delta)[eid]


def attack_cost(inst: Instance, att: AttackScenario, delta: FirstStageDecision) -> float:
    scores = effective_scores(inst, delta)
    for eid in att.edges:
        if eid not in scores:
            raise UnknownIdError(f"unknown edge {eid!r}")
    return sum(scores[eid] for eid in sorted(att.edges))


def is_affordable(cost: float, budget: float) -> bool:
    return cost <= budget + COST_TOL


def enumerate_attacks(
    inst: Instance,
    delta: FirstStageDecision,
    budget: float | None = None,
    cap: int = 10_000,
) -> tuple[list[AttackScenario], bool]:
    """All valid, affordable attacks under ``delta`` in canonical order.

    Arborescences are grown from the root one frontier edge at a time with
    include/exclude branching, which visits every rooted subtree exactly once.
    Returns ``(attacks, overflow)``; ``overflow`` is set when more than ``cap``
    attacks exist, in which case the list is truncated to ``cap`` entries.
    """
    if cap <= 0:
        raise ValueError("cap must be positive")
    graph = inst.attack_graph
    if budget is None:
        budget = inst.budgets.attacker
    scores = effective_scores(inst, delta)
    found: list[frozenset[EdgeId]] = []
    overflow = False

    def grow(tree_v: frozenset[str], tree_e: frozenset[EdgeId], frontier: list[EdgeId], cost: float):
        nonlocal overflow
        if overflow:
            return
        if not frontier:
            if len(found) >= cap:
                overflow = True
                return
            found.append(tree_e)
            return
        eid, rest = frontier[0], frontier[1:]
        new_cost = cost + scores[eid]
        if is_affordable(new_cost, budget):
            v = eid[1]
            nxt = [f for f in rest if f[1] != v]
            nxt += [
                e.id for e in graph.out_edges(v) if e.dst not in tree_v and e.dst != v
            ]
            nxt.sort()
            grow(tree_v | {v}, tree_e | {eid}, nxt, new_cost)
        grow(tree_v, tree_e, rest, cost)

    root = graph.root
    start = sorted(e.id for e in graph.out_edges(root) if e.dst != root)
    grow(frozenset({root}), frozenset(), start, 0.0)

    found.sort(key=lambda es: tuple(sorted(es)))
    return [AttackScenario.from_edges(graph, es) for es in found], overflow


def capacity_factor(inst: Instance, att: AttackScenario) -> dict[tuple[str, str], float]:
    """Per (procedure, hospital) share of capacity left during the downtime window."""
    graph = inst.attack_graph
    reached = att.vertices | {graph.root}
    factor = {(p, h): 1.0 for p in inst.procedure_ids for h in inst.hospitals}
    for (v, p, h), rate in graph.impacts.items():
        if v in reached and (p, h) in factor:
            factor[(p, h)] = min(factor[(p, h)], rate)
    return factor


def impact_signature(inst: Instance, att: AttackScenario) -> tuple[tuple[str, str, float], ...]:
    """Hashable summary of an attack's operational effect (non-unit factors only)."""
    return tuple(sorted((p, h, f) for (p, h), f in capacity_factor(inst, att).items() if f < 1.0))
