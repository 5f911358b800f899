"""Command-line entry point: ``dadres <command> [options]``.

Exit codes: 0 success, 1 validation failure, 2 solver failure,
3 nonconvergence, 4 usage error. Diagnostics go to stderr; data goes to
files only.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

from dadres.attackgraph import validate_attack
from dadres.backend import BACKENDS, SolveOptions, SolverError, get_backend
from dadres.ccg import MODES, CcgOptions, CcgResult, solve_ccg, worst_attack, write_log_csv
from dadres.core import (
    POLICIES,
    FirstStageDecision,
    Instance,
    errors_only,
    is_feasible_decision,
    policy_restrict,
    validate_instance,
    validate_response,
)
from dadres.gen import GenConfig, generate_instance, load_gen_config, simplex_weights
from dadres.io import (
    InstanceFormatError,
    InstanceValidationError,
    dumps,
    file_checksum,
    load_instance,
    load_solution,
    save_instance,
    solution_to_dict,
)
from dadres.resilience import evaluate_metrics, write_curves_csv

EXIT_OK, EXIT_INVALID, EXIT_SOLVER, EXIT_NONCONVERGED, EXIT_USAGE = 0, 1, 2, 3, 4

METRIC_KEYS = ("loss_delay", "loss_unmet", "rec_delay", "rec_unmet", "res_delay", "res_unmet", "weighted")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


@dataclass
class RunManifest:
    command: str
    options: dict
    instance_checksum: str | None
    backend: str | None
    seed: int
    wall_time: float = 0.0
    outputs: list[str] = field(default_factory=list)

    def write(self, path: Path) -> None:
        data = {
            "command": self.command,
            "options": self.options,
            "instance_checksum": self.instance_checksum,
            "backend": self.backend,
            "seed": self.seed,
            "wall_time": round(self.wall_time, 3),
            "outputs": sorted(self.outputs),
        }
        _atomic_write(path, dumps(data))


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    tmp.replace(path)


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def delay_unmet_grid(n: int = 9) -> list[tuple[float, float]]:
    """(0.9, 0.1), (0.8, 0.2), ... for n = 9: an even split grid strictly inside (0, 1)."""
    return [(round(i / (n + 1), 10), round(1 - i / (n + 1), 10)) for i in range(n, 0, -1)]


def split_weights(inst: Instance, delay: float, unmet: float) -> Instance:
    """Loss weighted 1, recovery and resistance 0.01, each scaled by the delay/unmet share."""
    obj = replace(
        inst.objective,
        w_loss_delay=delay,
        w_loss_unmet=unmet,
        w_rec_delay=0.01 * delay,
        w_rec_unmet=0.01 * unmet,
        w_res_delay=0.01 * delay,
        w_res_unmet=0.01 * unmet,
    )
    return inst.with_objective(obj)


def simplex_point_weights(inst: Instance, w_loss: float, w_res: float, w_rec: float) -> Instance:
    obj = replace(
        inst.objective,
        w_loss_delay=w_loss,
        w_loss_unmet=w_loss,
        w_res_delay=w_res,
        w_res_unmet=w_res,
        w_rec_delay=w_rec,
        w_rec_unmet=w_rec,
    )
    return inst.with_objective(obj)


# --------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="dadres", description="Tri-level resilience optimization for hospital networks.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, instance=True):
        if instance:
            sp.add_argument("--instance", required=True, type=Path)
        sp.add_argument("--out", type=Path)
        sp.add_argument("--seed", type=int, default=0)

    def solver(sp):
        sp.add_argument("--backend", choices=sorted(BACKENDS), default="highs")
        sp.add_argument("--gap", type=float, default=1e-9)
        sp.add_argument("--max-iters", type=int, default=50)
        sp.add_argument("--time-limit", type=float)
        sp.add_argument("--subproblem", choices=MODES, default="enumerate")

    g = sub.add_parser("gen", help="generate a synthetic instance")
    common(g, instance=False)
    g.add_argument("--config", type=Path, help="generator config (JSON)")

    v = sub.add_parser("validate", help="check an instance")
    common(v)

    s = sub.add_parser("solve", help="solve an instance by constraint generation")
    common(s)
    solver(s)
    s.add_argument("--policy", type=int, choices=sorted(POLICIES))
    s.add_argument("--curves", action=argparse.BooleanOptionalAction, default=True)

    e = sub.add_parser("evaluate", help="re-check a solution file against its instance")
    common(e)
    e.add_argument("--solution", required=True, type=Path)
    e.add_argument("--curves", action=argparse.BooleanOptionalAction, default=False)

    a = sub.add_parser("attack", help="worst attack against a given first-stage decision")
    common(a)
    solver(a)
    a.add_argument("--first-stage", required=True, type=Path)

    po = sub.add_parser("policy", help="compare preparation policies 0..7")
    common(po)
    solver(po)
    po.add_argument("--jobs", type=int, default=1)

    sw = sub.add_parser("sweep", help="budget and weight sensitivity sweeps")
    common(sw)
    solver(sw)
    sw.add_argument("--defender-budgets", type=_floats)
    sw.add_argument("--attacker-budgets", type=_floats)
    sw.add_argument("--weights-simplex", type=int, metavar="N")
    sw.add_argument("--delay-unmet-grid", type=int, metavar="N")
    sw.add_argument("--jobs", type=int, default=1)
    return p


def _backend(args):
    return get_backend(args.backend, SolveOptions(gap=args.gap, time_limit=None, seed=args.seed, threads=1))


def _ccg_options(args) -> CcgOptions:
    return CcgOptions(max_iters=args.max_iters, time_limit=args.time_limit, mode=args.subproblem)


def _resolved(args) -> dict:
    out = {}
    for k, v in sorted(vars(args).items()):
        out[k] = str(v) if isinstance(v, Path) else v
    return out


def _out_dir(args) -> Path:
    if args.out is None:
        raise UsageError("--out is required")
    args.out.mkdir(parents=True, exist_ok=True)
    return args.out


def _manifest(args, backend_name=None) -> RunManifest:
    inst_path = getattr(args, "instance", None)
    checksum = file_checksum(inst_path) if inst_path else None
    return RunManifest(args.command, _resolved(args), checksum, backend_name, args.seed)


# --------------------------------------------------------------------------
# commands


def cmd_gen(args) -> int:
    cfg = load_gen_config(args.config) if args.config else GenConfig()
    cfg = replace(cfg, seed=args.seed)
    if args.out is None:
        raise UsageError("--out is required")
    t0 = time.perf_counter()
    inst = generate_instance(cfg)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    save_instance(inst, args.out)
    man = RunManifest("gen", _resolved(args), file_checksum(args.out), None, args.seed)
    man.wall_time = time.perf_counter() - t0
    man.outputs = [str(args.out)]
    man.write(args.out.with_name(args.out.stem + ".manifest.json"))
    return EXIT_OK


def cmd_validate(args) -> int:
    inst = load_instance(args.instance, validate=False)
    report = validate_instance(inst)
    for v in report:
        print(f"{v.severity}: {v.code}: {v.message}", file=sys.stderr)
    if args.out is not None:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        _atomic_write(args.out, dumps([v.to_dict() for v in report]))
    return EXIT_INVALID if errors_only(report) else EXIT_OK


def emit_report(result: CcgResult, out: Path, curves: bool = True, policy: int | None = None) -> list[str]:
    """Write solution, curves, iteration log; returns the written paths."""
    sol = solution_to_dict(result.delta, result.attack, result.plan, result.report.to_dict(), result.summary())
    if policy is not None:
        sol["policy"] = policy
    paths = [out / "solution.json", out / "iterations.csv"]
    _atomic_write(paths[0], dumps(sol))
    write_log_csv(result, paths[1])
    if curves:
        paths.append(out / "curves.csv")
        write_curves_csv(result.report, paths[-1])
    return [str(p) for p in paths]


def cmd_solve(args) -> int:
    inst = load_instance(args.instance)
    if args.policy is not None:
        inst = policy_restrict(inst, args.policy)
    out = _out_dir(args)
    backend = _backend(args)
    man = _manifest(args, backend.name)
    t0 = time.perf_counter()
    result = solve_ccg(inst, backend, _ccg_options(args))
    man.outputs = emit_report(result, out, args.curves, args.policy)
    man.wall_time = time.perf_counter() - t0
    man.write(out / "manifest.json")
    print(
        f"{result.reason}: lb={result.lb:.6f} ub={result.ub:.6f} certified={result.certified:.6f} "
        f"iterations={result.iterations}",
        file=sys.stderr,
    )
    return EXIT_OK if result.converged else EXIT_NONCONVERGED


def cmd_evaluate(args) -> int:
    sol_path = args.solution / "solution.json" if args.solution.is_dir() else args.solution
    manifest_path = sol_path.parent / "manifest.json"
    if manifest_path.exists():
        recorded = json.loads(manifest_path.read_text()).get("instance_checksum")
        if recorded != file_checksum(args.instance):
            print("error: instance checksum does not match the run manifest", file=sys.stderr)
            return EXIT_INVALID
    inst = load_instance(args.instance)
    delta, attack, plan, data = load_solution(sol_path, inst)
    policy = data.get("policy")
    problems = []
    if not is_feasible_decision(policy_restrict(inst, policy) if policy is not None else inst, delta):
        problems.append("first-stage decision is infeasible")
    ok, why = validate_attack(inst.attack_graph, attack)
    if not ok:
        problems.append(f"attack is not valid: {why}")
    # stored values carry 6 decimals, so sums may drift by a few 1e-6
    problems += [v.message for v in validate_response(inst, delta, attack, plan, tol=1e-4)]
    report = evaluate_metrics(inst, plan)
    stored = data.get("metrics", {})
    for k, v in report.to_dict().items():
        if k in stored and abs(stored[k] - v) > 1e-5:
            problems.append(f"metric {k}: stored {stored[k]} recomputed {v}")
    for msg in problems:
        print(f"error: {msg}", file=sys.stderr)
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        _atomic_write(args.out / "evaluation.json", dumps({"metrics": report.to_dict(), "problems": problems}))
        if args.curves:
            write_curves_csv(report, args.out / "curves.csv")
    return EXIT_INVALID if problems else EXIT_OK


def cmd_attack(args) -> int:
    inst = load_instance(args.instance)
    delta = FirstStageDecision.from_dict(json.loads(args.first_stage.read_text()))
    if not is_feasible_decision(inst, delta):
        print("error: first-stage decision is infeasible for this instance", file=sys.stderr)
        return EXIT_INVALID
    out = _out_dir(args)
    backend = _backend(args)
    man = _manifest(args, backend.name)
    t0 = time.perf_counter()
    wa = worst_attack(inst, delta, backend, args.subproblem)
    data = {
        "attack": wa.attack.to_dict(),
        "bound": round(wa.bound, 6) + 0.0,
        "value": round(wa.value, 6) + 0.0,
        "mode": args.subproblem,
    }
    _atomic_write(out / "attack.json", dumps(data))
    man.outputs = [str(out / "attack.json")]
    man.wall_time = time.perf_counter() - t0
    man.write(out / "manifest.json")
    return EXIT_OK


def _solve_cell(inst: Instance, backend_name: str, solve_opts: SolveOptions, ccg_opts: CcgOptions) -> dict:
    backend = get_backend(backend_name, solve_opts)
    r = solve_ccg(inst, backend, ccg_opts)
    row = {k: round(v, 6) + 0.0 for k, v in r.report.to_dict().items()}
    # the headline value is the certified objective, not the metric recomputation
    row["weighted"] = round(r.certified, 6) + 0.0
    row.update(lb=round(r.lb, 6) + 0.0, ub=round(r.ub, 6) + 0.0, termination=r.reason, iterations=r.iterations)
    return row


def _run_cells(cells: list[Instance], args) -> list[dict]:
    solve_opts = SolveOptions(gap=args.gap, seed=args.seed, threads=1)
    ccg_opts = _ccg_options(args)
    backend_name = get_backend(args.backend).name
    if args.jobs <= 1:
        return [_solve_cell(c, backend_name, solve_opts, ccg_opts) for c in cells]
    with ProcessPoolExecutor(max_workers=args.jobs) as pool:
        futures = [pool.submit(_solve_cell, c, backend_name, solve_opts, ccg_opts) for c in cells]
        return [f.result() for f in futures]


def _write_csv(path: Path, header: list[str], rows: list[dict]) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=header, lineterminator="\n", extrasaction="ignore")
        w.writeheader()
        w.writerows(rows)
    tmp.replace(path)


def cmd_policy(args) -> int:
    inst = load_instance(args.instance)
    out = _out_dir(args)
    man = _manifest(args, get_backend(args.backend).name)
    t0 = time.perf_counter()
    pols = sorted(POLICIES)
    results = _run_cells([policy_restrict(inst, p) for p in pols], args)
    base = results[0]["weighted"]
    rows = []
    for p, r in zip(pols, results):
        pct = 100.0 * r["weighted"] / base if base > 0 else (100.0 if r["weighted"] == 0 else math.inf)
        rows.append(
            {
                "policy": p,
                "coop": int("coop" in POLICIES[p]),
                "backup": int("backup" in POLICIES[p]),
                "control": int("control" in POLICIES[p]),
                **r,
                "pct_of_policy0": round(pct, 4),
            }
        )
    header = ["policy", "coop", "backup", "control", *METRIC_KEYS, "pct_of_policy0", "lb", "ub", "iterations", "termination"]
    _write_csv(out / "policy.csv", header, rows)
    man.outputs = [str(out / "policy.csv")]
    man.wall_time = time.perf_counter() - t0
    man.write(out / "manifest.json")
    return EXIT_OK if all(r["termination"] == "gap-closed" for r in rows) else EXIT_NONCONVERGED


def cmd_sweep(args) -> int:
    inst = load_instance(args.instance)
    out = _out_dir(args)
    man = _manifest(args, get_backend(args.backend).name)
    t0 = time.perf_counter()
    cells: list[tuple[dict, Instance]] = []
    if args.defender_budgets or args.attacker_budgets:
        for bd in args.defender_budgets or [inst.budgets.defender]:
            for ba in args.attacker_budgets or [inst.budgets.attacker]:
                params = {"kind": "budget", "b_def": bd, "b_att": ba}
                cells.append((params, inst.with_budgets(defender=bd, attacker=ba)))
    if args.delay_unmet_grid:
        for d, u in delay_unmet_grid(args.delay_unmet_grid):
            cells.append(({"kind": "delay_unmet", "w_delay": d, "w_unmet": u}, split_weights(inst, d, u)))
    if args.weights_simplex:
        try:
            triples = simplex_weights(args.weights_simplex)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        for wl, wr, wc in triples:
            params = {"kind": "simplex", "w_loss": round(wl, 8), "w_res": round(wr, 8), "w_rec": round(wc, 8)}
            cells.append((params, simplex_point_weights(inst, wl, wr, wc)))
    if not cells:
        raise UsageError("nothing to sweep: give budgets, --delay-unmet-grid or --weights-simplex")
    results = _run_cells([c for _, c in cells], args)
    rows = []
    for (params, cell), r in zip(cells, results):
        rows.append(
            {
                "b_def": cell.budgets.defender,
                "b_att": cell.budgets.attacker,
                **{f"w_{k}": v for k, v in cell.objective.weights.items()},
                **params,
                **r,
            }
        )
    header = ["kind", "b_def", "b_att", "w_delay", "w_unmet", "w_loss", "w_res", "w_rec"]
    header += [f"w_{k}" for k in inst.objective.weights] + list(METRIC_KEYS) + ["lb", "ub", "iterations", "termination"]
    _write_csv(out / "sweep.csv", header, rows)
    man.outputs = [str(out / "sweep.csv")]
    man.wall_time = time.perf_counter() - t0
    man.write(out / "manifest.json")
    return EXIT_OK if all(r["termination"] == "gap-closed" for r in rows) else EXIT_NONCONVERGED


COMMANDS = {
    "gen": cmd_gen,
    "validate": cmd_validate,
    "solve": cmd_solve,
    "evaluate": cmd_evaluate,
    "attack": cmd_attack,
    "policy": cmd_policy,
    "sweep": cmd_sweep,
}


def run(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InstanceValidationError as exc:
        for v in exc.violations:
            print(f"error: {v.code}: {v.message}", file=sys.stderr)
        return EXIT_INVALID
    except (InstanceFormatError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
