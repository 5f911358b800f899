#!/usr/bin/env python3
"""Weighted objective over a grid of defender and attacker budget fractions.

Writes long-format CSV to stdout (rho_def, rho_att, b_def, b_att, weighted),
ready for any surface-plotting tool.
"""

import argparse
import csv
import sys

import numpy as np

from dadres.backend import get_backend
from dadres.ccg import CcgOptions, solve_ccg
from dadres.gen import GenConfig, generate_instance, with_budget_fractions


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--steps", type=int, default=5)
    ap.add_argument("--max-def", type=float, default=0.5)
    ap.add_argument("--max-att", type=float, default=0.4)
    ap.add_argument("--mode", default="enumerate")
    args = ap.parse_args()

    cfg = GenConfig(tau=4, n_edges=7, seed=args.seed)
    inst = generate_instance(cfg)
    backend = get_backend()
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["rho_def", "rho_att", "b_def", "b_att", "weighted"])
    for rd in np.linspace(0, args.max_def, args.steps):
        for ra in np.linspace(0, args.max_att, args.steps):
            cell = with_budget_fractions(inst, cfg, float(rd), float(ra))
            res = solve_ccg(cell, backend, CcgOptions(mode=args.mode))
            w.writerow([f"{rd:.3f}", f"{ra:.3f}", cell.budgets.defender, cell.budgets.attacker, f"{res.certified:.6f}"])


if __name__ == "__main__":
    main()
