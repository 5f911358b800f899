"""JSON instance and solution files.

Sparse tables are arrays of records with explicit index keys (``t``, ``p``,
``h``, ``h2``, ``edge``). Saving is canonical: records are sorted, keys are
sorted and floats keep their shortest round-trip representation, so
``save(load(f))`` reproduces a canonical file byte for byte.
"""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path
from typing import Any, Mapping

from dadres.attackgraph import AttackGraph, AttackScenario, Edge
from dadres.core import (
    DECISION_CLASSES,
    Backup,
    Budgets,
    Control,
    ControlLevel,
    Cooperation,
    FirstStageDecision,
    Instance,
    ObjectiveConfig,
    Procedure,
    ResponsePlan,
    Violation,
    errors_only,
    validate_instance,
)

FORMAT_VERSION = 1

TOP_LEVEL_KEYS = (
    "hospitals",
    "procedures",
    "horizon",
    "plan",
    "cap_overall",
    "cap_procedure",
    "cooperation",
    "backup",
    "controls",
    "attack_graph",
    "impacts",
    "budgets",
    "objective",
)


class InstanceFormatError(ValueError):
    """Malformed instance document (bad JSON or schema violation)."""


class InstanceValidationError(ValueError):
    def __init__(self, violations: list[Violation]):
        self.violations = violations
        lines = "; ".join(v.message for v in violations[:5])
        super().__init__(f"{len(violations)} validation error(s): {lines}")


def _num(x: float) -> float | int:
    # keep integers as integers in files so round trips are exact and compact
    if isinstance(x, bool):
        raise InstanceFormatError(f"boolean where a number was expected: {x!r}")
    if isinstance(x, int):
        return x
    if math.isfinite(x) and float(x).is_integer() and abs(x) < 2**53:
        return int(x)
    return float(x)


def dumps(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, indent=1, allow_nan=False) + "\n"


def file_checksum(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# --------------------------------------------------------------------------
# instance -> dict


def instance_to_dict(inst: Instance) -> dict:
    g = inst.attack_graph
    doc: dict[str, Any] = {
        "format_version": FORMAT_VERSION,
        "hospitals": list(inst.hospitals),
        "procedures": [{"id": p.id, "completion_window": p.completion_window} for p in inst.procedures],
        "horizon": {"tau": inst.tau, "tau_ub": inst.tau_ub},
        "plan": [{"t": t, "p": p, "h": h, "value": _num(v)} for (t, p, h), v in sorted(inst.plan.items())],
        "cap_overall": [{"t": t, "h": h, "value": _num(v)} for (t, h), v in sorted(inst.cap_overall.items())],
        "cap_procedure": [
            {"t": t, "p": p, "h": h, "value": _num(v)} for (t, p, h), v in sorted(inst.cap_procedure.items())
        ],
        "cooperation": [
            {
                "h": h,
                "h2": h2,
                "cost": _num(c.cost),
                "limit_total": _num(c.limit_total),
                "limits_tp": [{"t": t, "p": p, "value": _num(v)} for (t, p), v in sorted(c.limits_tp.items())],
                "limits_p": [{"p": p, "value": _num(v)} for p, v in sorted(c.limits_p.items())],
                "limits_t": [{"t": t, "value": _num(v)} for t, v in sorted(c.limits_t.items())],
                "lags": [{"p": p, "value": int(v)} for p, v in sorted(c.lags.items())],
            }
            for (h, h2), c in sorted(inst.cooperation.items())
        ],
        "backup": [
            {
                "h": h,
                "cost": _num(b.cost),
                "limit_total": _num(b.limit_total),
                "limits_t": [{"t": t, "value": _num(v)} for t, v in sorted(b.limits_t.items())],
                "limits_tp": [{"t": t, "p": p, "value": _num(v)} for (t, p), v in sorted(b.limits_tp.items())],
            }
            for h, b in sorted(inst.backup.items())
        ],
        "controls": [
            {
                "id": c.id,
                "levels": [
                    {
                        "id": lvl.id,
                        "cost": _num(lvl.cost),
                        "effects": [
                            {"edge": list(e), "increment": _num(v)} for e, v in sorted(lvl.effects.items())
                        ],
                    }
                    for lvl in c.levels
                ],
            }
            for c in inst.controls
        ],
        "attack_graph": {
            "vertices": list(g.vertices),
            "root": g.root,
            "targets": sorted(g.targets),
            "edges": [
                {"from": e.src, "to": e.dst, "key": e.key, "score": _num(e.score)} for e in g.edges
            ],
        },
        "impacts": [
            {"vertex": v, "p": p, "h": h, "rate": _num(r)} for (v, p, h), r in sorted(g.impacts.items())
        ],
        "budgets": {"defender": _num(inst.budgets.defender), "attacker": _num(inst.budgets.attacker)},
        "objective": objective_to_dict(inst.objective),
    }
    if inst.allowed != frozenset(DECISION_CLASSES):
        doc["allowed_classes"] = sorted(inst.allowed)
    return doc


def objective_to_dict(obj: ObjectiveConfig) -> dict:
    d = {
        "w_loss_delay": _num(obj.w_loss_delay),
        "w_loss_unmet": _num(obj.w_loss_unmet),
        "w_rec_delay": _num(obj.w_rec_delay),
        "w_rec_unmet": _num(obj.w_rec_unmet),
        "w_res_delay": _num(obj.w_res_delay),
        "w_res_unmet": _num(obj.w_res_unmet),
        "kappa_delay": _num(obj.kappa_delay),
        "kappa_unmet": _num(obj.kappa_unmet),
    }
    if obj.recovery_penalty is not None:
        d["recovery_penalty"] = _num(obj.recovery_penalty)
    return d


# --------------------------------------------------------------------------
# dict -> instance


class _Reader:
    """Field access that reports the JSON path of whatever is missing or mistyped."""

    def __init__(self, data: Mapping, path: str):
        if not isinstance(data, Mapping):
            raise InstanceFormatError(f"{path}: expected an object, got {type(data).__name__}")
        self.data = data
        self.path = path

    def get(self, key: str, kind=None, default=...):
        if key not in self.data:
            if default is ...:
                raise InstanceFormatError(f"{self.path}.{key}: missing required field")
            return default
        val = self.data[key]
        if kind is not None and not _is_kind(val, kind):
            raise InstanceFormatError(f"{self.path}.{key}: expected {kind}, got {val!r}")
        return val

    def records(self, key: str, default=...):
        rows = self.get(key, "array", default=[] if default is ... else default)
        return [_Reader(r, f"{self.path}.{key}[{i}]") for i, r in enumerate(rows)]


def _is_kind(val, kind: str) -> bool:
    if kind == "number":
        return isinstance(val, (int, float)) and not isinstance(val, bool)
    if kind == "int":
        return isinstance(val, int) and not isinstance(val, bool)
    if kind == "string":
        return isinstance(val, str)
    if kind == "array":
        return isinstance(val, list)
    if kind == "object":
        return isinstance(val, Mapping)
    raise ValueError(kind)


def instance_from_dict(data: Mapping) -> Instance:
    r = _Reader(data, "$")
    version = r.get("format_version", "int", default=FORMAT_VERSION)
    if version != FORMAT_VERSION:
        raise InstanceFormatError(f"$.format_version: unsupported version {version}")
    unknown = set(data) - set(TOP_LEVEL_KEYS) - {"format_version", "allowed_classes"}
    if unknown:
        raise InstanceFormatError(f"$: unknown top-level key(s) {sorted(unknown)}")

    hospitals = tuple(r.get("hospitals", "array"))
    procedures = tuple(
        Procedure(p.get("id", "string"), p.get("completion_window", "int")) for p in r.records("procedures")
    )
    hz = _Reader(r.get("horizon", "object"), "$.horizon")
    tau, tau_ub = hz.get("tau", "int"), hz.get("tau_ub", "int")

    plan = {(e.get("t", "int"), e.get("p", "string"), e.get("h", "string")): e.get("value", "number") for e in r.records("plan")}
    cap_overall = {(e.get("t", "int"), e.get("h", "string")): e.get("value", "number") for e in r.records("cap_overall")}
    cap_procedure = {
        (e.get("t", "int"), e.get("p", "string"), e.get("h", "string")): e.get("value", "number")
        for e in r.records("cap_procedure")
    }

    cooperation = {}
    for c in r.records("cooperation"):
        key = (c.get("h", "string"), c.get("h2", "string"))
        if key in cooperation:
            raise InstanceFormatError(f"{c.path}: duplicate cooperation pair {key}")
        cooperation[key] = Cooperation(
            cost=c.get("cost", "number"),
            limit_total=c.get("limit_total", "number", default=0),
            limits_tp={(e.get("t", "int"), e.get("p", "string")): e.get("value", "number") for e in c.records("limits_tp")},
            limits_p={e.get("p", "string"): e.get("value", "number") for e in c.records("limits_p")},
            limits_t={e.get("t", "int"): e.get("value", "number") for e in c.records("limits_t")},
            lags={e.get("p", "string"): e.get("value", "int") for e in c.records("lags")},
        )

    backup = {}
    for b in r.records("backup"):
        h = b.get("h", "string")
        if h in backup:
            raise InstanceFormatError(f"{b.path}: duplicate backup entry for {h!r}")
        backup[h] = Backup(
            cost=b.get("cost", "number"),
            limit_total=b.get("limit_total", "number", default=0),
            limits_t={e.get("t", "int"): e.get("value", "number") for e in b.records("limits_t")},
            limits_tp={(e.get("t", "int"), e.get("p", "string")): e.get("value", "number") for e in b.records("limits_tp")},
        )

    controls = []
    for c in r.records("controls"):
        levels = []
        for lvl in c.records("levels"):
            effects = {}
            for eff in lvl.records("effects"):
                edge = eff.get("edge", "array")
                if len(edge) != 3:
                    raise InstanceFormatError(f"{eff.path}.edge: expected [from, to, key]")
                effects[tuple(edge)] = eff.get("increment", "number")
            levels.append(ControlLevel(lvl.get("id", "string"), lvl.get("cost", "number"), effects))
        controls.append(Control(c.get("id", "string"), tuple(levels)))

    ag = _Reader(r.get("attack_graph", "object"), "$.attack_graph")
    edges = tuple(
        Edge(e.get("from", "string"), e.get("to", "string"), str(e.get("key", default="0")), e.get("score", "number"))
        for e in ag.records("edges")
    )
    impacts = {
        (e.get("vertex", "string"), e.get("p", "string"), e.get("h", "string")): e.get("rate", "number")
        for e in r.records("impacts")
    }
    graph = AttackGraph(
        vertices=tuple(ag.get("vertices", "array")),
        root=ag.get("root", "string"),
        targets=frozenset(ag.get("targets", "array", default=[])),
        edges=edges,
        impacts=impacts,
    )

    bd = _Reader(r.get("budgets", "object"), "$.budgets")
    budgets = Budgets(bd.get("defender", "number"), bd.get("attacker", "number"))
    objective = objective_from_dict(r.get("objective", "object", default={}))
    allowed = frozenset(r.get("allowed_classes", "array", default=list(DECISION_CLASSES)))

    return Instance(
        hospitals=hospitals,
        procedures=procedures,
        tau=tau,
        tau_ub=tau_ub,
        plan=plan,
        cap_overall=cap_overall,
        cap_procedure=cap_procedure,
        cooperation=cooperation,
        backup=backup,
        controls=tuple(controls),
        attack_graph=graph,
        budgets=budgets,
        objective=objective,
        allowed=allowed,
    )


def objective_from_dict(data: Mapping) -> ObjectiveConfig:
    o = _Reader(data, "$.objective")
    base = ObjectiveConfig()
    kw = {}
    for name in (
        "w_loss_delay",
        "w_loss_unmet",
        "w_rec_delay",
        "w_rec_unmet",
        "w_res_delay",
        "w_res_unmet",
        "kappa_delay",
        "kappa_unmet",
    ):
        kw[name] = o.get(name, "number", default=getattr(base, name))
    kw["recovery_penalty"] = o.get("recovery_penalty", "number", default=None)
    return ObjectiveConfig(**kw)


def loads_instance(text: str, validate: bool = True) -> Instance:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceFormatError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    try:
        inst = instance_from_dict(data)
    except (TypeError, KeyError) as exc:
        raise InstanceFormatError(f"schema violation: {exc}") from exc
    if validate:
        errs = errors_only(validate_instance(inst))
        if errs:
            raise InstanceValidationError(errs)
    return inst


def load_instance(path: str | Path, validate: bool = True) -> Instance:
    return loads_instance(Path(path).read_text(), validate=validate)


def save_instance(inst: Instance, path: str | Path) -> None:
    Path(path).write_text(dumps(instance_to_dict(inst)))


# --------------------------------------------------------------------------
# solutions


def plan_to_dict(plan: ResponsePlan, digits: int = 6) -> dict:
    def rnd(v: float) -> float | int:
        return _num(round(v, digits) + 0.0)

    return {
        "y": [{"t": t, "p": p, "h": h, "value": rnd(v)} for (t, p, h), v in sorted(plan.y.items())],
        "ybar": [
            {"t": t, "p": p, "h": h, "h2": g, "value": rnd(v)} for (t, p, h, g), v in sorted(plan.ybar.items())
        ],
        "z_overall": [{"t": t, "h": h, "value": rnd(v)} for (t, h), v in sorted(plan.z_overall.items())],
        "z_procedure": [
            {"t": t, "p": p, "h": h, "value": rnd(v)} for (t, p, h), v in sorted(plan.z_procedure.items())
        ],
    }


def plan_from_dict(data: Mapping) -> ResponsePlan:
    return ResponsePlan(
        y={(r["t"], r["p"], r["h"]): float(r["value"]) for r in data.get("y", [])},
        ybar={(r["t"], r["p"], r["h"], r["h2"]): float(r["value"]) for r in data.get("ybar", [])},
        z_overall={(r["t"], r["h"]): float(r["value"]) for r in data.get("z_overall", [])},
        z_procedure={(r["t"], r["p"], r["h"]): float(r["value"]) for r in data.get("z_procedure", [])},
    )


def solution_to_dict(
    delta: FirstStageDecision,
    attack: AttackScenario,
    plan: ResponsePlan,
    metrics: Mapping,
    ccg: Mapping,
) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "first_stage": delta.to_dict(),
        "attack": attack.to_dict(),
        "response": plan_to_dict(plan),
        "metrics": dict(metrics),
        "ccg": dict(ccg),
    }


def load_solution(path: str | Path, inst: Instance) -> tuple[FirstStageDecision, AttackScenario, ResponsePlan, dict]:
    data = json.loads(Path(path).read_text())
    if data.get("format_version") != FORMAT_VERSION:
        raise InstanceFormatError(f"{path}: unsupported solution format_version {data.get('format_version')!r}")
    delta = FirstStageDecision.from_dict(data["first_stage"])
    attack = AttackScenario.from_dict(inst.attack_graph, data["attack"])
    plan = plan_from_dict(data["response"])
    return delta, attack, plan, data
