"""Mechanical LP dualization with attack-parametric right-hand sides."""

from __future__ import annotations

import math
from collections import defaultdict

from dadres.milp.model import EQ, LE, Bilinear, MilpModel, ModelError

# primal row tag -> dual variable family
DUAL_FAMILY = {
    "balance": "lambda",
    "cap_overall": "mu",
    "cap_procedure": "nu",
    "coop_tp": "zeta",
    "coop_p": "beta",
    "coop_t": "iota",
    "coop_total": "vartheta",
    "backup_t": "phi",
    "backup_tp": "psi",
    "backup_link": "chi",
    "backup_total": "rho",
    "impact": "eta",
    "unmet_link": "sigma_unmet",
    "res_delay": "pi_delay",
    "res_unmet": "pi_unmet",
    "rec_delay": "xi_delay",
    "rec_unmet": "xi_unmet",
}


def dualize_parametric(lp: MilpModel) -> MilpModel:
    """Return the maximization dual of a minimizing LP.

    Every row is first brought to ``>=`` form, so inequality duals are
    nonnegative and equality duals free. Columns must be nonnegative or free.
    Parametric right-hand-side terms ``c * param`` become bilinear objective
    markers ``c * param * dual``. The row a dual belongs to is recorded in
    ``meta["dual_of"]``.
    """
    if lp.is_mixed:
        raise ModelError("dualization needs an all-continuous model")
    if lp.sense != "min":
        raise ModelError("dualization expects a minimization")
    lp.validate()
    for v in lp.variables.values():
        free = v.lb == -math.inf and v.ub == math.inf
        if not free and not (v.lb == 0.0 and v.ub == math.inf):
            raise ModelError(f"column {v.name} has bounds [{v.lb}, {v.ub}]; only >= 0 or free supported")

    dual = MilpModel(name=f"dual_{lp.name}", sense="max")
    dual.parameters = set(lp.parameters)
    dual.objective_constant = lp.objective_constant
    dual.meta["dual_of"] = {}
    column: dict[str, dict[str, float]] = defaultdict(dict)
    for c in lp.constraints:
        sign = -1.0 if c.sense == LE else 1.0
        fam = DUAL_FAMILY.get(c.tag, f"dual_{c.tag}")
        idx = c.index
        if dual.var_name(fam, idx) in dual.variables:
            idx = idx + (c.name,)
        dv = dual.add_var(fam, idx, lb=-math.inf if c.sense == EQ else 0.0)
        dual.meta["dual_of"][dv] = c.name
        if c.rhs:
            dual.objective[dv] = sign * c.rhs
        for p, coef in c.params.items():
            dual.bilinear.append(Bilinear(p, dv, sign * coef))
        for k, a in c.coeffs.items():
            column[k][dv] = sign * a
    for name, v in lp.variables.items():
        cost = lp.objective.get(name, 0.0)
        free = v.lb == -math.inf
        dual.add_constraint(column.get(name, {}), EQ if free else LE, cost, "dual", (name,))
    return dual
