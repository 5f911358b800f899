"""Free-format MPS export with annotation comments.

Rows and columns get generic names ``R<i>``/``C<j>`` so that ids containing
spaces or commas survive the round trip; the original names and tags are
kept in ``* !`` comment lines.
"""

from __future__ import annotations

import math
from pathlib import Path

from dadres.milp.model import BINARY, EQ, GE, LE, MilpModel

_SENSE = {LE: "L", GE: "G", EQ: "E"}


def _num(v: float) -> str:
    return format(float(v), ".17g")


def model_to_mps(m: MilpModel) -> str:
    m.validate()
    cols = list(m.variables)
    col_id = {name: f"C{j}" for j, name in enumerate(cols)}
    lines = [f"* model {m.name}"]
    for j, name in enumerate(cols):
        v = m.variables[name]
        lines.append(f"* ! var=C{j} sym={v.symbol} idx={','.join(map(str, v.index))}")
    lines.append(f"NAME {m.name or 'model'}")
    if m.sense == "max":
        lines += ["OBJSENSE", "    MAX"]
    lines += ["ROWS", " N  OBJ"]
    for i, c in enumerate(m.constraints):
        lines.append(f"* ! eq={c.tag} idx={','.join(map(str, c.index))}")
        lines.append(f" {_SENSE[c.sense]}  R{i}")
    entries: dict[str, list[tuple[str, float]]] = {name: [] for name in cols}
    for name in cols:
        if m.objective.get(name, 0.0) != 0.0:
            entries[name].append(("OBJ", m.objective[name]))
    for i, c in enumerate(m.constraints):
        for k, a in c.coeffs.items():
            entries[k].append((f"R{i}", a))
    lines.append("COLUMNS")
    in_int = False
    for name in cols:
        is_int = m.variables[name].kind == BINARY
        if is_int != in_int:
            tag = "INTORG" if is_int else "INTEND"
            lines.append(f"    MARKER  'MARKER'  '{tag}'")
            in_int = is_int
        ents = entries[name] or [("OBJ", 0.0)]
        for row, a in ents:
            lines.append(f"    {col_id[name]}  {row}  {_num(a)}")
    if in_int:
        lines.append("    MARKER  'MARKER'  'INTEND'")
    lines.append("RHS")
    if m.objective_constant:
        # objective offset enters with flipped sign
        lines.append(f"    RHS  OBJ  {_num(-m.objective_constant)}")
    for i, c in enumerate(m.constraints):
        if c.params:
            raise ValueError(f"row {c.name} still has unbound parameters")
        if c.rhs:
            lines.append(f"    RHS  R{i}  {_num(c.rhs)}")
    bounds = []
    for name in cols:
        v, cid = m.variables[name], col_id[name]
        if v.kind == BINARY:
            bounds += [f" LO BND  {cid}  {_num(v.lb)}", f" UP BND  {cid}  {_num(v.ub)}"]
            continue
        if v.lb == -math.inf and v.ub == math.inf:
            bounds.append(f" FR BND  {cid}")
            continue
        if v.lb == -math.inf:
            bounds.append(f" MI BND  {cid}")
        elif v.lb != 0.0:
            bounds.append(f" LO BND  {cid}  {_num(v.lb)}")
        if v.ub != math.inf:
            bounds.append(f" UP BND  {cid}  {_num(v.ub)}")
    if bounds:
        lines.append("BOUNDS")
        lines += bounds
    lines.append("ENDATA")
    return "\n".join(lines) + "\n"


def export_model(m: MilpModel, path: str | Path) -> None:
    Path(path).write_text(model_to_mps(m))
