"""Model construction: response LP/MILP, master, dual, subproblem, export."""

from dadres.milp.dual import DUAL_FAMILY, dualize_parametric
from dadres.milp.export import export_model, model_to_mps
from dadres.milp.master import build_master, extract_decision
from dadres.milp.model import BINARY, CONTINUOUS, EQ, GE, LE, MilpModel, ModelError
from dadres.milp.subproblem import DEFAULT_BIG_M_Q, build_subproblem_milp, extract_attack
from dadres.milp.third_stage import (
    INF_FIX,
    build_third_stage_lp,
    build_third_stage_milp,
    extract_plan,
    selected_recovery,
)

__all__ = [
    "BINARY",
    "CONTINUOUS",
    "DEFAULT_BIG_M_Q",
    "DUAL_FAMILY",
    "EQ",
    "GE",
    "INF_FIX",
    "LE",
    "MilpModel",
    "ModelError",
    "build_master",
    "build_subproblem_milp",
    "build_third_stage_lp",
    "build_third_stage_milp",
    "dualize_parametric",
    "export_model",
    "extract_attack",
    "extract_decision",
    "extract_plan",
    "model_to_mps",
    "selected_recovery",
]
