import csv
import dataclasses

import pytest

from dadres.attackgraph import AttackScenario, attack_cost, enumerate_attacks, is_affordable, validate_attack
from dadres.backend import SolverError, brute_force_trilevel, exact_inner
from dadres.ccg import (
    BigMError,
    CcgOptions,
    MODES,
    attack_id,
    mode_slack,
    solve_ccg,
    solve_subproblem,
    tight_fixes,
    worst_attack,
    write_log_csv,
)
from dadres.core import FirstStageDecision, enumerate_decisions
from dadres.gen import generate_instance

from conftest import TINY, blocking_control, make_instance

NONE = FirstStageDecision()


def hit(inst):
    return AttackScenario.from_edges(inst.attack_graph, [("r", "v", "k1")])


def test_tight_fixes_grid():
    inst = make_instance(tau=4)
    fixes = tight_fixes(inst)
    assert fixes[0] == (None, None)
    assert {f for f in fixes if f[1] is None and f[0] is not None} == {(t, None) for t in range(5)}
    assert len(fixes) == 11
    assert tight_fixes(make_instance(tau=8)) == [(None, None)] + [(t, None) for t in (0, 2, 4, 6, 8)] + [
        (None, t) for t in (0, 2, 4, 6, 8)
    ]


@pytest.mark.parametrize("mode", MODES)
def test_worst_attack_zero_budget(backend, mode):
    inst = make_instance(b_att=0.0)
    wa = worst_attack(inst, NONE, backend, mode)
    assert wa.attack.edges == frozenset()
    assert wa.value == pytest.approx(0.0, abs=1e-9)
    if mode == "fast":
        assert wa.bound == pytest.approx(mode_slack(inst, "fast"), abs=1e-7)


@pytest.mark.parametrize("mode", MODES)
def test_worst_attack_reaches_only_target(backend, mode):
    inst = make_instance(tau=3, tau_ub=1, x=3.0, u=4.0)
    wa = worst_attack(inst, NONE, backend, mode)
    assert wa.attack.edges == hit(inst).edges
    assert validate_attack(inst.attack_graph, wa.attack)[0]
    assert wa.value == pytest.approx(exact_inner(inst, NONE, hit(inst), backend)[0])


def test_worst_attack_rejects_mode(backend):
    with pytest.raises(ValueError):
        worst_attack(make_instance(), NONE, backend, "slow")


def test_enumerate_overflow(backend):
    inst = generate_instance(TINY)
    with pytest.raises(SolverError):
        worst_attack(inst, NONE, backend, "enumerate", max_attacks=1)


@pytest.mark.parametrize("seed", range(4))
def test_fast_and_tight_bracket(backend, seed):
    inst = generate_instance(dataclasses.replace(TINY, seed=seed))
    slack = mode_slack(inst, "fast")
    for delta in list(enumerate_decisions(inst))[:3]:
        exact = worst_attack(inst, delta, backend, "enumerate")
        fast = worst_attack(inst, delta, backend, "fast")
        tight = worst_attack(inst, delta, backend, "tight")
        assert fast.value <= exact.value + 1e-7
        assert exact.value - 1e-6 <= fast.bound <= exact.value + slack + 1e-6
        assert exact.value - 1e-6 <= tight.bound <= fast.bound + 1e-6
        for wa in (fast, tight):
            assert validate_attack(inst.attack_graph, wa.attack)[0]
            assert is_affordable(attack_cost(inst, wa.attack, delta), inst.budgets.attacker)


def test_subproblem_bound_covers_every_attack(backend):
    inst = generate_instance(TINY)
    att, bound = solve_subproblem(inst, NONE, backend)
    from dadres.milp import build_third_stage_lp

    for a in enumerate_attacks(inst, NONE)[0]:
        lp = backend.solve(build_third_stage_lp(inst, NONE, a))
        assert lp.objective <= bound + 1e-6


def test_subproblem_escalates_small_big_m(backend):
    inst = make_instance(tau=3, tau_ub=1, x=3.0, u=4.0)
    att, bound = solve_subproblem(inst, NONE, backend, big_m_q=1e-2)
    ref_att, ref = solve_subproblem(inst, NONE, backend)
    assert bound == pytest.approx(ref, abs=1e-6)
    assert att.edges == ref_att.edges
    with pytest.raises(BigMError):
        solve_subproblem(inst, NONE, backend, big_m_q=1e-3)


# -- the loop -----------------------------------------------------------------


@pytest.mark.parametrize("mode", MODES)
def test_zero_budget_one_iteration(backend, mode):
    res = solve_ccg(make_instance(b_att=0.0), backend, CcgOptions(mode=mode))
    assert res.iterations == 1
    assert res.reason == "gap-closed"
    assert res.lb == pytest.approx(0.0, abs=1e-9)
    assert res.certified == pytest.approx(0.0, abs=1e-9)
    assert max(res.report.delay_curve) == 0 and max(res.report.unmet_curve) == 0


def test_control_prices_out_attack(backend):
    inst = make_instance(tau=3, tau_ub=1, x=3.0, u=4.0, b_def=1.0, controls=[blocking_control(inc=0.5)])
    res = solve_ccg(inst, backend)
    assert res.delta.controls == frozenset({("C", "L1")})
    assert res.certified == pytest.approx(0.0, abs=1e-9)
    assert res.iterations <= 2
    assert res.lb == pytest.approx(brute_force_trilevel(inst, backend).value, abs=1e-9)


@pytest.mark.parametrize("seed", range(5))
def test_enumerate_matches_brute_force(backend, seed):
    inst = generate_instance(dataclasses.replace(TINY, seed=seed))
    res = solve_ccg(inst, backend)
    oracle = brute_force_trilevel(inst, backend)
    assert res.converged
    assert res.lb == pytest.approx(oracle.value, abs=1e-6)
    assert res.certified == pytest.approx(oracle.inner_max(res.delta), abs=1e-6)


@pytest.mark.parametrize("mode", MODES)
def test_log_invariants(backend, mode):
    inst = generate_instance(dataclasses.replace(TINY, seed=2))
    res = solve_ccg(inst, backend, CcgOptions(mode=mode))
    lbs = [r.lb for r in res.log]
    assert lbs == sorted(lbs)
    for r in res.log:
        assert r.lb <= r.ub + 1e-6
        assert r.certified <= r.ub + 1e-6
    assert res.certified >= res.lb - 1e-6 or mode != "enumerate"
    for att in res.scenarios:
        assert validate_attack(inst.attack_graph, att)[0]
    assert len({a.edges for a in res.scenarios}) == len(res.scenarios)
    assert res.iterations <= len(enumerate_attacks(inst, NONE, budget=float("inf"), cap=10**6)[0]) + 1


def test_iteration_limit(backend):
    inst = make_instance(tau=3, tau_ub=1, x=3.0, u=4.0)
    res = solve_ccg(inst, backend, CcgOptions(max_iters=1))
    assert res.reason == "iteration-limit"
    assert res.iterations == 1
    # certification still reports the pooled attack
    assert res.certified == pytest.approx(exact_inner(inst, NONE, hit(inst), backend)[0])


def test_time_limit(backend):
    inst = make_instance(tau=3, tau_ub=1, x=3.0, u=4.0)
    res = solve_ccg(inst, backend, CcgOptions(time_limit=0.0))
    assert res.reason == "time-limit"


def test_initial_scenarios(backend):
    inst = make_instance(tau=3, tau_ub=1, x=3.0, u=4.0)
    res = solve_ccg(inst, backend, CcgOptions(initial=(hit(inst),)))
    assert res.iterations == 1 and res.converged
    # the edge is known but its head is not selected
    bogus = AttackScenario(frozenset({("r", "v", "k1")}), frozenset())
    with pytest.raises(ValueError):
        solve_ccg(inst, backend, CcgOptions(initial=(bogus,)))
    with pytest.raises(ValueError):
        solve_ccg(inst, backend, CcgOptions(mode="other"))


def test_log_csv(tmp_path, backend):
    res = solve_ccg(make_instance(tau=3, tau_ub=1, x=3.0, u=4.0), backend)
    path = tmp_path / "iterations.csv"
    write_log_csv(res, path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["iter", "lb", "ub", "certified", "seconds"]
    assert len(rows) == res.iterations + 1
    write_log_csv(res, path, with_times=False)
    assert all(r[-1] == "" for r in list(csv.reader(open(path)))[1:])
    assert attack_id(hit(make_instance())) == "r>v#k1"
    assert attack_id(AttackScenario.empty(make_instance().attack_graph)) == "empty"
    assert set(res.summary()) == {"lb", "ub", "certified", "iterations", "termination", "mode", "scenarios"}
