import itertools
import math
import random

import highspy
import pytest

from dadres.attackgraph import AttackScenario, attack_cost, enumerate_attacks, validate_attack
from dadres.backend import exact_inner
from dadres.core import FirstStageDecision, ObjectiveConfig, ResponsePlan, enumerate_decisions
from dadres.gen import generate_instance
from dadres.milp import (
    DUAL_FAMILY,
    GE,
    INF_FIX,
    LE,
    MilpModel,
    ModelError,
    build_master,
    build_subproblem_milp,
    build_third_stage_lp,
    build_third_stage_milp,
    dualize_parametric,
    export_model,
    extract_attack,
    extract_decision,
    extract_plan,
    model_to_mps,
    selected_recovery,
)
from dadres.milp.model import KNOWN_TAGS
from dadres.milp.third_stage import attack_param
from dadres.resilience import evaluate_metrics

from conftest import TINY, blocking_control, make_instance

NONE = FirstStageDecision()


def hit(inst):
    return AttackScenario.from_edges(inst.attack_graph, [("r", "v", "k1")])


def all_fixes(inst):
    opts = [None, *inst.times]
    return list(itertools.product(opts, opts))


def lp_min_over_fixes(inst, delta, att, backend):
    vals = []
    for fix in all_fixes(inst):
        res = backend.solve(build_third_stage_lp(inst, delta, att, fix))
        if res.status == "Optimal":
            vals.append(res.objective)
    return min(vals)


# -- third-stage LP ------------------------------------------------------------


def test_lp_variable_count():
    lp = build_third_stage_lp(make_instance(tau=2), NONE, None)
    assert lp.num_vars == 29
    assert not lp.is_mixed
    sizes = {s: len(lp.vars_by_symbol(s)) for s in ("y", "ybar", "z_overall", "z_procedure", "unmet_aux")}
    assert sizes == {"y": 6, "ybar": 6, "z_overall": 6, "z_procedure": 6, "unmet_aux": 3}


def test_lp_empty_attack(backend):
    inst = make_instance()
    lp = build_third_stage_lp(inst, NONE, AttackScenario.empty(inst.attack_graph), INF_FIX)
    res = backend.solve(lp)
    assert res.objective == pytest.approx(inst.recovery_penalty * 0.02, abs=1e-9)
    plan = extract_plan(lp, res.values)
    assert plan.y == pytest.approx({k: v for k, v in inst.plan.items()})


def greedy_plan(inst, att):
    """Serve backlog as early as capacity allows; optimal without cooperation or backups."""
    from dadres.attackgraph import capacity_factor

    f = capacity_factor(inst, att)
    plan = ResponsePlan()
    for p in inst.procedure_ids:
        for h in inst.hospitals:
            backlog = 0.0
            for t in inst.times:
                backlog += inst.x(t, p, h)
                cap = inst.u(t, p, h) * (f[p, h] if t <= inst.tau_ub else 1.0)
                plan.y[t, p, h] = min(backlog, cap)
                backlog -= plan.y[t, p, h]
    return plan


def test_lp_halved_capacity_matches_greedy(backend):
    inst = make_instance(tau=3, tau_ub=1, x=3.0, u=4.0, rate=0.5)
    att = hit(inst)
    rep = evaluate_metrics(inst, greedy_plan(inst, att))
    assert rep.delay_curve == (1.0, 2.0, 1.0, 0.0)
    obj = inst.objective
    m = inst.recovery_penalty
    expected_lp = rep.weighted - obj.w_rec_delay * rep.rec_delay - obj.w_rec_unmet * rep.rec_unmet
    expected_lp += m * (obj.w_rec_delay + obj.w_rec_unmet)
    lp_res = backend.solve(build_third_stage_lp(inst, NONE, att))
    assert lp_res.objective == pytest.approx(expected_lp, abs=1e-7)
    value, plan, report = exact_inner(inst, NONE, att, backend)
    assert value == pytest.approx(rep.weighted, abs=1e-7)
    assert report.weighted == pytest.approx(value, abs=1e-6)


def test_invalid_recovery_fix():
    inst = make_instance(tau=2)
    with pytest.raises(ValueError):
        build_third_stage_lp(inst, NONE, None, (3, None))
    with pytest.raises(ValueError):
        build_third_stage_lp(inst, NONE, None, (None, -1))


def test_symbolic_impacts_bind_to_concrete(backend):
    inst = make_instance(tau=3, tau_ub=1, x=3.0, u=4.0)
    sym = build_third_stage_lp(inst, NONE, None)
    assert sym.parameters == {attack_param("v")}
    for reached in (0.0, 1.0):
        att = hit(inst) if reached else AttackScenario.empty(inst.attack_graph)
        bound = backend.solve(sym.bind({attack_param("v"): reached}))
        direct = backend.solve(build_third_stage_lp(inst, NONE, att))
        assert bound.objective == pytest.approx(direct.objective, abs=1e-9)


# -- recovery MILP ------------------------------------------------------------


def single_blackout():
    """One hospital, plan (2, 2, 2); capacity 0 at t <= 1, 6 afterwards; window 1."""
    return make_instance(hospitals=("A",), tau=2, tau_ub=1, x=2.0, u=6.0, rate=0.0)


def test_milp_zero_curves_pick_time_zero(backend):
    inst = make_instance()
    m = build_third_stage_milp(inst, NONE, AttackScenario.empty(inst.attack_graph))
    res = backend.solve(m)
    assert res.objective == pytest.approx(0.0, abs=1e-9)
    assert selected_recovery(m, res.values, inst) == (0.0, 0.0)
    assert res.values["b_delay[0]"] == pytest.approx(1) and res.values["b_unmet[0]"] == pytest.approx(1)


def test_milp_forced_curve(backend):
    inst = single_blackout()
    att = hit(inst)
    m = build_third_stage_milp(inst, NONE, att)
    res = backend.solve(m)
    rep = evaluate_metrics(inst, extract_plan(m, res.values))
    assert rep.delay_curve == pytest.approx((2, 4, 0))
    assert rep.unmet_curve == pytest.approx((0, 0, 2))
    assert res.values["b_delay[2]"] == pytest.approx(1)
    assert res.values["b_unmet_inf"] == pytest.approx(1)
    assert selected_recovery(m, res.values, inst) == (2.0, inst.recovery_penalty)
    obj = inst.objective
    assert res.objective == pytest.approx(
        6 + 2 + 2 * obj.w_rec_delay + inst.recovery_penalty * obj.w_rec_unmet + 4 * 0.01 + 2 * 0.01, abs=1e-7
    )
    assert res.objective == pytest.approx(lp_min_over_fixes(inst, NONE, att, backend), abs=1e-7)


@pytest.mark.parametrize("seed", range(3))
def test_milp_equals_min_over_fixes(backend, seed):
    inst = generate_instance(TINY.__class__(**{**TINY.__dict__, "seed": seed, "tau": 3}))
    rng = random.Random(seed)
    deltas = list(enumerate_decisions(inst))
    for _ in range(3):
        d = rng.choice(deltas)
        att = rng.choice(enumerate_attacks(inst, d)[0])
        m = build_third_stage_milp(inst, d, att)
        res = backend.solve(m)
        assert res.objective == pytest.approx(lp_min_over_fixes(inst, d, att, backend), abs=1e-6)
        rep = evaluate_metrics(inst, extract_plan(m, res.values))
        assert selected_recovery(m, res.values, inst) == (rep.rec_delay, rep.rec_unmet)


# -- master -------------------------------------------------------------------


def test_master_without_scenarios(backend):
    inst = make_instance(backup=True, b_def=1.0)
    m = build_master(inst, [])
    res = backend.solve(m)
    assert res.objective == pytest.approx(0.0)


def test_master_empty_scenario(backend):
    inst = make_instance(backup=True, b_def=1.0)
    res = backend.solve(build_master(inst, [AttackScenario.empty(inst.attack_graph)]))
    assert res.objective == pytest.approx(0.0, abs=1e-9)


def test_master_priced_out_attack(backend):
    """The only attack becomes unaffordable once the control is deployed."""
    inst = make_instance(tau=3, tau_ub=1, x=3.0, u=4.0, b_att=1.0, b_def=1.0, controls=[blocking_control(inc=0.5)])
    att = hit(inst)
    m = build_master(inst, [att])
    res = backend.solve(m)
    assert res.objective == pytest.approx(0.0, abs=1e-9)
    assert extract_decision(m, res.values).controls == frozenset({("C", "L1")})
    # oracle: evaluate every decision with the indicator resolved by hand
    values = {}
    for d in enumerate_decisions(inst):
        affordable = attack_cost(inst, att, d) <= inst.budgets.attacker
        values[d] = exact_inner(inst, d, att, backend)[0] if affordable else 0.0
    assert min(values.values()) == pytest.approx(res.objective, abs=1e-9)
    assert values[NONE] > 0


def test_master_lower_bounds_restricted_value(backend):
    inst = make_instance(tau=3, tau_ub=1, x=3.0, u=4.0, b_att=1.0, backup=True, b_def=1.0)
    att = hit(inst)
    res = backend.solve(build_master(inst, [att]))
    best = min(exact_inner(inst, d, att, backend)[0] for d in enumerate_decisions(inst))
    assert res.objective == pytest.approx(best, abs=1e-7)


# -- dualization --------------------------------------------------------------


def test_textbook_dual(backend):
    lp = MilpModel(sense="min")
    x = lp.add_var("x")
    lp.add_constraint({x: 1.0}, GE, 3.0, "test")
    lp.add_objective({x: 1.0})
    dual = dualize_parametric(lp)
    assert dual.sense == "max"
    (lam,) = dual.variables
    assert dual.variables[lam].lb == 0.0
    assert dual.objective == {lam: 3.0}
    (row,) = dual.constraints
    assert row.coeffs == {lam: 1.0} and row.sense == LE and row.rhs == 1.0
    assert backend.solve(dual).objective == pytest.approx(3.0)


def test_dual_rejects_bad_inputs():
    m = MilpModel(sense="max")
    m.add_var("x")
    with pytest.raises(ModelError):
        dualize_parametric(m)
    m = MilpModel()
    m.add_var("x", kind="binary")
    with pytest.raises(ModelError):
        dualize_parametric(m)
    m = MilpModel()
    m.add_var("x", ub=5.0)
    with pytest.raises(ModelError):
        dualize_parametric(m)
    m = MilpModel()
    x = m.add_var("x")
    m.add_constraint({x: 1.0}, LE, 1.0, "test", params={"a[v]": 1.0})
    with pytest.raises(ModelError):
        dualize_parametric(m)


def test_dual_structure_of_response_lp():
    inst = make_instance(tau=2)
    dual = dualize_parametric(build_third_stage_lp(inst, NONE, None))
    fams = {v.symbol for v in dual.variables.values()}
    assert {"lambda", "mu", "nu", "zeta", "beta", "iota", "vartheta", "phi", "psi", "chi", "rho", "eta"} <= fams
    assert {"sigma_unmet", "pi_delay", "pi_unmet"} <= fams
    # one multiplier per balance row: |T| * |P| * |H|
    assert len(dual.vars_by_symbol("lambda")) == 6
    assert all(v.lb == 0.0 for v in dual.variables.values())
    assert len(dual.constraints) == 29
    # the backup-consistency row has zero right-hand side, so its multiplier never enters the objective
    assert not any(dual.variables[k].symbol == "chi" for k in dual.objective)
    assert {b.param for b in dual.bilinear} == {attack_param("v")}
    fixed = dualize_parametric(build_third_stage_lp(inst, NONE, None, (1, 2)))
    assert {"xi_delay", "xi_unmet"} <= {v.symbol for v in fixed.variables.values()}


@pytest.mark.parametrize("seed", range(3))
def test_strong_duality(backend, seed):
    inst = generate_instance(TINY.__class__(**{**TINY.__dict__, "seed": seed}))
    rng = random.Random(seed)
    deltas = list(enumerate_decisions(inst))
    checked = 0
    while checked < 6:
        d = rng.choice(deltas)
        att = rng.choice(enumerate_attacks(inst, d)[0])
        fix = rng.choice(all_fixes(inst))
        primal = backend.solve(build_third_stage_lp(inst, d, att, fix))
        if primal.status != "Optimal":
            continue
        dual = dualize_parametric(build_third_stage_lp(inst, d, None, fix))
        reached = att.vertices
        vals = {p: float(p[2:-1] in reached) for p in dual.parameters}
        assert backend.solve(dual.bind(vals)).objective == pytest.approx(primal.objective, abs=1e-6)
        checked += 1


# -- subproblem ---------------------------------------------------------------


def test_subproblem_zero_budget(backend):
    inst = make_instance(b_att=0.0)
    sp = build_subproblem_milp(inst, NONE)
    res = backend.solve(sp)
    assert extract_attack(sp, res.values, inst).edges == frozenset()
    lp = backend.solve(build_third_stage_lp(inst, NONE, AttackScenario.empty(inst.attack_graph)))
    assert res.objective == pytest.approx(lp.objective, abs=1e-7)
    assert res.objective == pytest.approx(inst.recovery_penalty * 0.02, abs=1e-7)


@pytest.mark.parametrize("b_att, expect_hit", [(1.0, True), (0.5, False)])
def test_subproblem_picks_affordable_target(backend, b_att, expect_hit):
    inst = make_instance(tau=3, tau_ub=1, x=3.0, u=4.0, b_att=b_att)
    sp = build_subproblem_milp(inst, NONE)
    res = backend.solve(sp)
    att = extract_attack(sp, res.values, inst)
    assert validate_attack(inst.attack_graph, att)[0]
    assert (att.edges == hit(inst).edges) == expect_hit
    primal = backend.solve(build_third_stage_lp(inst, NONE, att))
    assert res.objective == pytest.approx(primal.objective, abs=1e-5)
    # oracle: best LP value over all affordable attacks
    best = max(backend.solve(build_third_stage_lp(inst, NONE, a)).objective for a in enumerate_attacks(inst, NONE)[0])
    assert res.objective == pytest.approx(best, abs=1e-6)


def test_subproblem_annotations_audit():
    inst = generate_instance(TINY)
    for m in (
        build_subproblem_milp(inst, NONE),
        build_master(inst, [AttackScenario.empty(inst.attack_graph)]),
        build_third_stage_milp(inst, NONE, AttackScenario.empty(inst.attack_graph)),
        build_third_stage_lp(inst, NONE, None, (1, 1)),
    ):
        m.validate()
        assert m.audit()["unknown"] == 0
        assert set(m.audit()) <= set(KNOWN_TAGS) | {"dual"}
        assert all(v.symbol for v in m.variables.values())


def test_model_validate_catches_undeclared():
    m = MilpModel()
    m.add_constraint({"ghost": 1.0}, LE, 1.0, "test")
    with pytest.raises(ModelError):
        m.validate()
    m = MilpModel()
    x = m.add_var("x")
    m.add_constraint({x: math.inf}, LE, 1.0, "test")
    with pytest.raises(ModelError):
        m.validate()
    with pytest.raises(ModelError):
        m.add_var("x")


# -- export -------------------------------------------------------------------


def test_export_empty_model(tmp_path):
    text = model_to_mps(MilpModel(name="empty"))
    body = [ln for ln in text.splitlines() if not ln.startswith("*")]
    assert body == ["NAME empty", "ROWS", " N  OBJ", "COLUMNS", "RHS", "ENDATA"]


def test_export_declares_all_columns(tmp_path):
    lp = build_third_stage_lp(make_instance(tau=2), NONE, AttackScenario.empty(make_instance().attack_graph))
    text = model_to_mps(lp)
    section = text.split("COLUMNS\n")[1].split("RHS\n")[0]
    cols = {ln.split()[0] for ln in section.splitlines() if "MARKER" not in ln}
    assert len(cols) == 29
    assert "* ! eq=balance idx=0,p,A" in text
    assert model_to_mps(lp) == text


@pytest.mark.parametrize("kind", ["lp", "milp", "subproblem"])
def test_export_import_reproduces_optimum(tmp_path, backend, kind):
    inst = make_instance(tau=3, tau_ub=1, x=3.0, u=4.0, backup=True, b_def=1.0)
    d = FirstStageDecision(backup=frozenset({"A"}))
    model = {
        "lp": lambda: build_third_stage_lp(inst, d, hit(inst), (2, None)),
        "milp": lambda: build_third_stage_milp(inst, d, hit(inst)),
        "subproblem": lambda: build_subproblem_milp(inst, d),
    }[kind]()
    path = tmp_path / "m.mps"
    export_model(model, path)
    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    h.readModel(str(path))
    h.run()
    assert h.getModelStatus() == highspy.HighsModelStatus.kOptimal
    assert h.getInfo().objective_function_value == pytest.approx(backend.solve(model).objective, abs=1e-6)
