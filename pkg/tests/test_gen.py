import dataclasses
import json

import pytest

from dadres.attackgraph import enumerate_attacks
from dadres.backend import brute_force_trilevel, exact_inner
from dadres.core import FirstStageDecision, ObjectiveConfig, ResponsePlan, validate_instance
from dadres.gen import (
    GenConfig,
    GenConfigError,
    generate_instance,
    load_gen_config,
    policy_batch,
    simplex_weights,
    with_budget_fractions,
)
from dadres.io import dumps, instance_to_dict
from dadres.resilience import evaluate_metrics

from conftest import TINY

NONE = FirstStageDecision()


def test_same_seed_byte_identical():
    a = dumps(instance_to_dict(generate_instance(GenConfig(seed=7))))
    b = dumps(instance_to_dict(generate_instance(GenConfig(seed=7))))
    assert a == b
    assert a != dumps(instance_to_dict(generate_instance(GenConfig(seed=8))))


def test_zero_attacker_fraction():
    assert generate_instance(GenConfig(rho_att=0.0)).budgets.attacker == 0.0


@pytest.mark.parametrize("seed", range(10))
def test_generated_instances_are_valid(seed):
    cfg = GenConfig(seed=seed, n_hospitals=1 + seed % 3, n_procedures=1 + seed % 2, n_layers=1 + seed % 3)
    inst = generate_instance(cfg)
    assert validate_instance(inst) == []
    for e in inst.attack_graph.edges:
        assert round(e.score * 1000) == pytest.approx(e.score * 1000, abs=1e-9)
    for lvl in (lvl for c in inst.controls for lvl in c.levels):
        for inc in lvl.effects.values():
            assert round(inc * 1000) == pytest.approx(inc * 1000, abs=1e-9)
    mapped = {(p, h) for (_, p, h) in inst.attack_graph.impacts}
    assert mapped == {(p, h) for p in inst.procedure_ids for h in inst.hospitals}
    assert inst.tau_ub == min(14, cfg.tau)


def test_budget_fractions_against_totals():
    inst = generate_instance(GenConfig(rho_def=0.5, rho_att=0.5))
    total = sum(c.cost for c in inst.cooperation.values()) + sum(b.cost for b in inst.backup.values())
    total += sum(lvl.cost for c in inst.controls for lvl in c.levels)
    assert 0.5 * total - 1e-3 <= inst.budgets.defender <= 0.5 * total + 1e-9
    scores = sum(e.score for e in inst.attack_graph.edges)
    assert 0.5 * scores - 1e-3 <= inst.budgets.attacker <= 0.5 * scores + 1e-9
    cfg = GenConfig()
    again = with_budget_fractions(generate_instance(cfg), cfg, 0.5, 0.5)
    assert again.budgets == inst.budgets


def test_default_size_fits_brute_force(backend):
    cfg = GenConfig(n_hospitals=2, n_procedures=1, tau=5, n_layers=2, vertices_per_layer=3, n_edges=8)
    inst = generate_instance(cfg)
    assert len(inst.attack_graph.vertices) <= 8
    out = brute_force_trilevel(inst, backend)
    assert out.value >= 0


def test_objective_template():
    obj = generate_instance(GenConfig()).objective
    assert (obj.w_loss_delay, obj.w_loss_unmet) == (1.0, 1.0)
    assert (obj.w_rec_delay, obj.w_res_unmet) == (0.01, 0.01)
    assert (obj.kappa_delay, obj.kappa_unmet) == (0.0, 0.0)


@pytest.mark.parametrize(
    "bad",
    [
        {"n_hospitals": 0},
        {"rho_def": 1.5},
        {"impact_range": (0.5, 1.2)},
        {"score_range": (1.0, 0.5)},
        {"n_controls": -1},
    ],
)
def test_config_violations(bad):
    with pytest.raises(GenConfigError):
        generate_instance(GenConfig(**bad))


def test_config_file_round_trip(tmp_path):
    cfg = GenConfig(seed=3, tau=4, objective=ObjectiveConfig(w_loss_delay=0.5))
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg.to_dict()))
    assert load_gen_config(path) == cfg
    path.write_text(json.dumps({"seeds": 1}))
    with pytest.raises(GenConfigError):
        load_gen_config(path)


def test_policy_batch():
    batch = policy_batch(generate_instance(TINY))
    assert sorted(batch) == list(range(8))
    assert batch[0].allowed == frozenset()
    assert batch[7].allowed == frozenset({"coop", "backup", "control"})


# -- simplex ------------------------------------------------------------------


def test_simplex_three_points():
    pts = simplex_weights(3)
    assert len(pts) == 3
    for i, w in enumerate(pts):
        assert sum(w) == pytest.approx(1.0, abs=1e-12)
        assert max(range(3), key=lambda k: w[k]) == i
        assert w[i] == pytest.approx(1 - 2e-6, abs=1e-9)


def test_simplex_twenty_one_points():
    pts = simplex_weights(21)
    assert len(set(pts)) == 21
    assert all(abs(sum(w) - 1.0) <= 1e-9 for w in pts)
    assert all(min(w) > 0 for w in pts)
    assert (0.4, 0.2, 0.4) in [tuple(round(v, 9) for v in w) for w in pts]


@pytest.mark.parametrize("n", [0, 1, 2, 4, 20])
def test_simplex_unrealizable(n):
    with pytest.raises(ValueError):
        simplex_weights(n)


# -- scaling ------------------------------------------------------------------


def scaled(inst, k):
    """All capacities, plans and preparation limits multiplied by ``k``."""
    sc = lambda d: {key: k * v for key, v in d.items()}
    coop = {
        key: dataclasses.replace(
            c, limit_total=k * c.limit_total, limits_tp=sc(c.limits_tp), limits_p=sc(c.limits_p), limits_t=sc(c.limits_t)
        )
        for key, c in inst.cooperation.items()
    }
    backup = {
        key: dataclasses.replace(b, limit_total=k * b.limit_total, limits_t=sc(b.limits_t), limits_tp=sc(b.limits_tp))
        for key, b in inst.backup.items()
    }
    return dataclasses.replace(
        inst,
        plan=sc(inst.plan),
        cap_overall=sc(inst.cap_overall),
        cap_procedure=sc(inst.cap_procedure),
        cooperation=coop,
        backup=backup,
    )


def test_scaling_property(backend):
    no_rec = ObjectiveConfig(w_rec_delay=0.0, w_rec_unmet=0.0)
    inst = dataclasses.replace(generate_instance(dataclasses.replace(TINY, seed=1)), objective=no_rec)
    big = scaled(inst, 3.0)
    base = brute_force_trilevel(inst, backend)
    assert brute_force_trilevel(big, backend).value == pytest.approx(3.0 * base.value, abs=1e-6)
    # plans scale with the instance: loss and resistance scale, recovery times do not move
    for att in enumerate_attacks(inst, base.delta)[0]:
        _, plan, rep = exact_inner(inst, base.delta, att, backend)
        up = ResponsePlan(
            y={k: 3 * v for k, v in plan.y.items()},
            ybar={k: 3 * v for k, v in plan.ybar.items()},
            z_overall={k: 3 * v for k, v in plan.z_overall.items()},
            z_procedure={k: 3 * v for k, v in plan.z_procedure.items()},
        )
        rep3 = evaluate_metrics(big, up)
        assert (rep3.rec_delay, rep3.rec_unmet) == (rep.rec_delay, rep.rec_unmet)
        for name in ("loss_delay", "loss_unmet", "res_delay", "res_unmet"):
            assert getattr(rep3, name) == pytest.approx(3 * getattr(rep, name), abs=1e-6)
