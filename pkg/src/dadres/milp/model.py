"""Solver-agnostic linear model with per-row and per-column annotations."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field, replace

CONTINUOUS = "continuous"
BINARY = "binary"

LE, GE, EQ = "<=", ">=", "=="

# constraint tag -> what it encodes; anything else is reported as unknown by audit()
KNOWN_TAGS = {
    "def_budget": "defender budget",
    "one_level": "one level per control",
    "edge_endpoint": "edge requires endpoints",
    "edge_count": "edges equal selected vertices",
    "root_outflow": "root outflow",
    "flow_on_edge": "flow only on selected edges",
    "flow_balance": "flow conservation",
    "att_budget": "attacker budget",
    "balance": "cumulative balance",
    "cap_overall": "overall capacity",
    "cap_procedure": "procedure capacity",
    "coop_tp": "cooperation per step and procedure",
    "coop_p": "cooperation per procedure",
    "coop_t": "cooperation per step",
    "coop_total": "cooperation total",
    "backup_t": "backup per step",
    "backup_tp": "backup per step and procedure",
    "backup_link": "backup consistency",
    "backup_total": "backup total",
    "impact": "attack impact on capacity",
    "unmet_link": "unmet auxiliary bounds overdue plan",
    "res_delay": "delay resistance epigraph",
    "res_unmet": "unmet resistance epigraph",
    "rec_delay": "delay recovery (fixed or big-M)",
    "rec_unmet": "unmet recovery (fixed or big-M)",
    "rec_choice": "exactly one recovery indicator",
    "master_epigraph": "master value bounds scenario value",
    "feas_hi": "scenario feasible forces indicator",
    "feas_lo": "indicator off requires unaffordable scenario",
    "q_le_a": "product linearization: q <= M a",
    "q_le_eta": "product linearization: q <= eta",
    "q_ge": "product linearization: q >= eta - M (1 - a)",
    "dual": "dual constraint of a primal column",
    "test": "ad-hoc test row",
}


class ModelError(ValueError):
    pass


@dataclass
class Variable:
    name: str
    kind: str = CONTINUOUS
    lb: float = 0.0
    ub: float = math.inf
    symbol: str = ""
    index: tuple = ()


@dataclass
class Constraint:
    name: str
    coeffs: dict[str, float]
    sense: str
    rhs: float
    tag: str
    index: tuple = ()
    # rhs terms affine in external parameters: rhs_total = rhs + sum(c * param)
    params: dict[str, float] = field(default_factory=dict)


@dataclass
class Bilinear:
    """Objective term ``coeff * param * var`` left for the caller to linearize."""

    param: str
    var: str
    coeff: float


@dataclass
class MilpModel:
    name: str = "model"
    sense: str = "min"
    variables: dict[str, Variable] = field(default_factory=dict)
    constraints: list[Constraint] = field(default_factory=list)
    objective: dict[str, float] = field(default_factory=dict)
    objective_constant: float = 0.0
    parameters: set[str] = field(default_factory=set)
    bilinear: list[Bilinear] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    # -- building ---------------------------------------------------------
    def add_var(
        self,
        symbol: str,
        index: tuple = (),
        kind: str = CONTINUOUS,
        lb: float = 0.0,
        ub: float = math.inf,
        prefix: str = "",
    ) -> str:
        name = self.var_name(symbol, index, prefix)
        if name in self.variables:
            raise ModelError(f"duplicate variable {name}")
        if kind == BINARY:
            lb, ub = max(lb, 0.0), min(ub, 1.0)
        self.variables[name] = Variable(name, kind, lb, ub, symbol, tuple(index))
        return name

    @staticmethod
    def var_name(symbol: str, index: tuple = (), prefix: str = "") -> str:
        return f"{prefix}{symbol}[{','.join(map(str, index))}]" if index else f"{prefix}{symbol}"

    def add_constraint(
        self,
        coeffs: dict[str, float],
        sense: str,
        rhs: float,
        tag: str,
        index: tuple = (),
        params: dict[str, float] | None = None,
        prefix: str = "",
    ) -> Constraint:
        if sense not in (LE, GE, EQ):
            raise ModelError(f"bad sense {sense!r}")
        name = f"{prefix}{tag}[{','.join(map(str, index))}]#{len(self.constraints)}"
        row = Constraint(
            name,
            {k: float(v) for k, v in coeffs.items() if v != 0},
            sense,
            float(rhs),
            tag,
            tuple(index),
            dict(params or {}),
        )
        self.constraints.append(row)
        return row

    def add_objective(self, coeffs: dict[str, float], constant: float = 0.0) -> None:
        for k, v in coeffs.items():
            self.objective[k] = self.objective.get(k, 0.0) + float(v)
        self.objective_constant += float(constant)

    # -- queries ----------------------------------------------------------
    @property
    def num_vars(self) -> int:
        return len(self.variables)

    @property
    def is_mixed(self) -> bool:
        return any(v.kind == BINARY for v in self.variables.values())

    def vars_by_symbol(self, symbol: str, prefix: str = "") -> dict[tuple, str]:
        return {
            v.index: name
            for name, v in self.variables.items()
            if v.symbol == symbol and name.startswith(prefix)
        }

    def rows(self, tag: str) -> list[Constraint]:
        return [c for c in self.constraints if c.tag == tag]

    def validate(self) -> None:
        for c in self.constraints:
            for k, v in c.coeffs.items():
                if k not in self.variables:
                    raise ModelError(f"constraint {c.name} references undeclared variable {k}")
                if not math.isfinite(v):
                    raise ModelError(f"non-finite coefficient in {c.name}")
            if not math.isfinite(c.rhs):
                raise ModelError(f"non-finite rhs in {c.name}")
            for p in c.params:
                if p not in self.parameters:
                    raise ModelError(f"constraint {c.name} uses undeclared parameter {p}")
        for k, v in self.objective.items():
            if k not in self.variables:
                raise ModelError(f"objective references undeclared variable {k}")
            if not math.isfinite(v):
                raise ModelError(f"non-finite objective coefficient on {k}")
        for v in self.variables.values():
            if not v.symbol:
                raise ModelError(f"variable {v.name} lacks an annotation")

    def audit(self) -> Counter:
        """Count constraints per annotation tag; unknown tags are pooled under 'unknown'."""
        return Counter(c.tag if c.tag in KNOWN_TAGS else "unknown" for c in self.constraints)

    def bind(self, values: dict[str, float]) -> MilpModel:
        """Substitute parameter values into right-hand sides.

        Bilinear objective terms whose parameter is bound become linear.
        """
        missing = self.parameters - set(values)
        out = replace(
            self,
            variables=dict(self.variables),
            objective=dict(self.objective),
            parameters=set(missing),
            constraints=[],
            bilinear=[],
            meta=dict(self.meta),
        )
        for c in self.constraints:
            rhs = c.rhs + sum(coef * values[p] for p, coef in c.params.items() if p in values)
            left = {p: coef for p, coef in c.params.items() if p not in values}
            out.constraints.append(replace(c, rhs=rhs, params=left, coeffs=dict(c.coeffs)))
        for b in self.bilinear:
            if b.param in values:
                out.objective[b.var] = out.objective.get(b.var, 0.0) + b.coeff * values[b.param]
            else:
                out.bilinear.append(b)
        return out

    def evaluate_objective(self, values: dict[str, float]) -> float:
        return self.objective_constant + sum(c * values.get(k, 0.0) for k, c in self.objective.items())
