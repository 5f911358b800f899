"""Seeded synthetic instances and experiment-design helpers.

Attack graphs are layered: the entry state feeds a chain of privilege
layers whose last layer holds the target states. All randomness comes from
one ``numpy`` generator seeded by ``GenConfig.seed``, so a config fully
determines the instance.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np

from dadres.attackgraph import AttackGraph, Edge
from dadres.core import (
    Backup,
    Budgets,
    Control,
    ControlLevel,
    Cooperation,
    Instance,
    ObjectiveConfig,
    POLICIES,
    Procedure,
    errors_only,
    policy_restrict,
    validate_instance,
)

GRID = 1e-3


class GenConfigError(ValueError):
    pass


@dataclass(frozen=True)
class GenConfig:
    n_hospitals: int = 2
    n_procedures: int = 1
    tau: int = 5
    n_layers: int = 2
    vertices_per_layer: int = 2
    n_edges: int = 8
    parallel_edge_rate: float = 0.1
    targets_per_pair: int = 1
    n_controls: int = 1
    levels_per_control: int = 2
    capacity_range: tuple[int, int] = (4, 10)
    utilization_range: tuple[float, float] = (0.7, 1.0)
    completion_range: tuple[int, int] = (0, 2)
    score_range: tuple[float, float] = (0.1, 1.0)
    impact_range: tuple[float, float] = (0.0, 0.6)
    lag_range: tuple[int, int] = (0, 1)
    coop_share_range: tuple[float, float] = (0.2, 0.6)
    backup_share_range: tuple[float, float] = (0.1, 0.5)
    coop_cost_range: tuple[float, float] = (1.0, 5.0)
    backup_cost_range: tuple[float, float] = (1.0, 5.0)
    control_cost_range: tuple[float, float] = (1.0, 5.0)
    increment_range: tuple[float, float] = (0.1, 1.0)
    rho_def: float = 0.2
    rho_att: float = 0.05
    objective: ObjectiveConfig = ObjectiveConfig()
    seed: int = 0

    def validate(self) -> None:
        counts = ("n_hospitals", "n_procedures", "tau", "n_layers", "vertices_per_layer",
                  "n_edges", "targets_per_pair", "levels_per_control")
        for name in counts:
            if getattr(self, name) < 1:
                raise GenConfigError(f"{name} must be >= 1")
        if self.n_controls < 0:
            raise GenConfigError("n_controls must be >= 0")
        for name in ("parallel_edge_rate", "rho_def", "rho_att"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise GenConfigError(f"{name} must lie in [0, 1]")
        lo, hi = self.impact_range
        if not 0.0 <= lo <= hi <= 1.0:
            raise GenConfigError("impact_range must lie within [0, 1]")
        for f in fields(self):
            val = getattr(self, f.name)
            if f.name.endswith("_range") and (val[0] > val[1] or val[0] < 0):
                raise GenConfigError(f"{f.name} must be an ordered nonnegative pair")

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> GenConfig:
        known = {f.name: f for f in fields(cls)}
        unknown = set(data) - set(known)
        if unknown:
            raise GenConfigError(f"unknown config keys {sorted(unknown)}")
        kw = {}
        for k, v in data.items():
            if k == "objective":
                kw[k] = ObjectiveConfig(**v)
            elif isinstance(v, list):
                kw[k] = tuple(v)
            else:
                kw[k] = v
        return cls(**kw)


def load_gen_config(path: str | Path) -> GenConfig:
    return GenConfig.from_dict(json.loads(Path(path).read_text()))


def _grid(x: float) -> float:
    return round(round(x / GRID) * GRID, 3)


def _floor_grid(x: float) -> float:
    return round(math.floor(x / GRID + 1e-9) * GRID, 3)


def _build_graph(cfg: GenConfig, rng: np.random.Generator, hospitals, procedures) -> AttackGraph:
    root = "r"
    layers = [[root]] + [[f"v{i}_{j}" for j in range(cfg.vertices_per_layer)] for i in range(1, cfg.n_layers + 1)]
    pairs = []
    for i in range(1, len(layers)):
        for dst in layers[i]:
            pairs.extend((src, dst) for src in layers[i - 1])
    chosen: list[tuple[str, str]] = []
    # every state gets one incoming action from the previous layer
    for i in range(1, len(layers)):
        for dst in layers[i]:
            chosen.append((layers[i - 1][int(rng.integers(len(layers[i - 1])))], dst))
    spare = [pr for pr in pairs if pr not in chosen]
    extra = max(0, cfg.n_edges - len(chosen))
    if spare and extra:
        picks = rng.permutation(len(spare))[:extra]
        chosen += [spare[int(k)] for k in sorted(picks)]
    edges = []
    keys: dict[tuple[str, str], int] = {}
    lo, hi = cfg.score_range
    for src, dst in chosen:
        n_copies = 1
        while len(edges) + n_copies < cfg.n_edges and rng.random() < cfg.parallel_edge_rate:
            n_copies += 1
        for _ in range(n_copies):
            k = keys.get((src, dst), 0)
            keys[src, dst] = k + 1
            edges.append(Edge(src, dst, f"k{k}", _grid(rng.uniform(lo, hi))))
    targets = layers[-1]
    slots = [(p, h) for p in procedures for h in hospitals]
    impacts: dict[tuple[str, str, str], float] = {}
    ilo, ihi = cfg.impact_range
    for v in targets:
        p, h = slots[int(rng.integers(len(slots)))]
        impacts[v, p, h] = round(float(rng.uniform(ilo, ihi)), 2)
    for p, h in slots:
        mapped = [v for v in targets if (v, p, h) in impacts]
        free = [v for v in targets if (v, p, h) not in impacts]
        need = min(cfg.targets_per_pair - len(mapped), len(free))
        for k in rng.permutation(len(free))[: max(need, 0)]:
            impacts[free[int(k)], p, h] = round(float(rng.uniform(ilo, ihi)), 2)
    vertices = tuple(v for layer in layers for v in layer)
    return AttackGraph(vertices, root, frozenset(targets), tuple(edges), impacts)


def generate_instance(cfg: GenConfig) -> Instance:
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    H = tuple(f"H{i}" for i in range(cfg.n_hospitals))
    procs = tuple(
        Procedure(f"P{j}", int(rng.integers(cfg.completion_range[0], cfg.completion_range[1] + 1)))
        for j in range(cfg.n_procedures)
    )
    P = tuple(p.id for p in procs)
    T = range(cfg.tau + 1)

    cap_p, cap_o, plan = {}, {}, {}
    for t in T:
        for h in H:
            for p in P:
                cap_p[t, p, h] = int(rng.integers(cfg.capacity_range[0], cfg.capacity_range[1] + 1))
            overall = math.ceil(0.9 * sum(cap_p[t, p, h] for p in P))
            cap_o[t, h] = overall
            room = overall
            for p in P:
                x = math.floor(rng.uniform(*cfg.utilization_range) * cap_p[t, p, h])
                x = min(x, cap_p[t, p, h], room)
                room -= x
                if x:
                    plan[t, p, h] = x

    def share(u, rng_range):
        return math.ceil(rng.uniform(*rng_range) * u)

    coop = {}
    for h in H:
        for g in H:
            if h == g:
                continue
            tp = {(t, p): share(cap_p[t, p, h], cfg.coop_share_range) for t in T for p in P}
            coop[h, g] = Cooperation(
                cost=_grid(rng.uniform(*cfg.coop_cost_range)),
                limit_total=float(math.ceil(0.5 * sum(tp.values()))),
                limits_tp={k: float(v) for k, v in tp.items()},
                limits_p={p: float(math.ceil(0.6 * sum(tp[t, p] for t in T))) for p in P},
                limits_t={t: float(sum(tp[t, p] for p in P)) for t in T},
                lags={p: int(rng.integers(cfg.lag_range[0], cfg.lag_range[1] + 1)) for p in P},
            )
    backup = {}
    for h in H:
        tp = {(t, p): share(cap_p[t, p, h], cfg.backup_share_range) for t in T for p in P}
        backup[h] = Backup(
            cost=_grid(rng.uniform(*cfg.backup_cost_range)),
            limit_total=float(math.ceil(0.5 * sum(tp.values()))),
            limits_t={t: float(sum(tp[t, p] for p in P)) for t in T},
            limits_tp={k: float(v) for k, v in tp.items()},
        )

    graph = _build_graph(cfg, rng, H, P)
    eids = graph.edge_ids
    controls = []
    for c in range(cfg.n_controls):
        hit = sorted(eids[int(k)] for k in rng.permutation(len(eids))[: max(1, len(eids) // 3)])
        levels = []
        for lvl in range(cfg.levels_per_control):
            scale = lvl + 1
            levels.append(
                ControlLevel(
                    id=f"L{lvl}",
                    cost=_grid(scale * rng.uniform(*cfg.control_cost_range)),
                    effects={e: _grid(scale * rng.uniform(*cfg.increment_range)) for e in hit},
                )
            )
        controls.append(Control(f"C{c}", tuple(levels)))

    total_cost = (
        sum(c.cost for c in coop.values())
        + sum(b.cost for b in backup.values())
        + sum(lvl.cost for c in controls for lvl in c.levels)
    )
    budgets = Budgets(
        defender=_floor_grid(cfg.rho_def * total_cost),
        attacker=_floor_grid(cfg.rho_att * sum(e.score for e in graph.edges)),
    )
    inst = Instance(
        hospitals=H,
        procedures=procs,
        tau=cfg.tau,
        tau_ub=min(14, cfg.tau),
        plan=plan,
        cap_overall={k: float(v) for k, v in cap_o.items()},
        cap_procedure={k: float(v) for k, v in cap_p.items()},
        cooperation=coop,
        backup=backup,
        controls=tuple(controls),
        attack_graph=graph,
        budgets=budgets,
        objective=cfg.objective,
    )
    errs = errors_only(validate_instance(inst))
    if errs:  # pragma: no cover - generator bug guard
        raise GenConfigError(f"generated instance is invalid: {errs}")
    return inst


def simplex_weights(n_points: int = 21) -> list[tuple[float, float, float]]:
    """Lattice points of the unit 2-simplex as (loss, resistance, recovery) weights.

    ``n_points`` must be a triangular number C(d+2, 2) with d >= 1. Zero
    coordinates are clipped to 1e-6 and each triple renormalized.
    """
    d = 0
    while (d + 1) * (d + 2) // 2 < n_points:
        d += 1
    if d < 1 or (d + 1) * (d + 2) // 2 != n_points:
        raise ValueError(f"{n_points} points do not form a simplex lattice")
    out = []
    for i in range(d, -1, -1):
        for j in range(d - i, -1, -1):
            w = np.array([i, j, d - i - j], dtype=float) / d
            w = np.maximum(w, 1e-6)
            w /= w.sum()
            out.append(tuple(float(v) for v in w))
    return out


def policy_batch(inst: Instance) -> dict[int, Instance]:
    """The instance restricted to every preparation policy."""
    return {p: policy_restrict(inst, p) for p in sorted(POLICIES)}


def with_budget_fractions(inst: Instance, cfg: GenConfig, rho_def: float, rho_att: float) -> Instance:
    """Re-derive budgets of a generated instance for other fractions."""
    scaled = replace(cfg, rho_def=rho_def, rho_att=rho_att)
    total_cost = (
        sum(c.cost for c in inst.cooperation.values())
        + sum(b.cost for b in inst.backup.values())
        + sum(lvl.cost for c in inst.controls for lvl in c.levels)
    )
    return inst.with_budgets(
        defender=_floor_grid(scaled.rho_def * total_cost),
        attacker=_floor_grid(scaled.rho_att * sum(e.score for e in inst.attack_graph.edges)),
    )
