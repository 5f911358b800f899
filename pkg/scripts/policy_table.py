#!/usr/bin/env python3
"""Compare preparation policies 0..7 on a batch of generated instances.

Prints one row per instance with the weighted objective of every policy as
a percentage of policy 0 (doing nothing).
"""

import argparse
import dataclasses

from dadres.backend import get_backend
from dadres.ccg import CcgOptions, solve_ccg
from dadres.core import POLICIES, policy_restrict
from dadres.gen import GenConfig, generate_instance


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--tau", type=int, default=4)
    ap.add_argument("--mode", default="enumerate")
    ap.add_argument("--backend", default="highs")
    args = ap.parse_args()

    backend = get_backend(args.backend)
    cfg = GenConfig(rho_att=0.3, rho_def=0.3, tau=args.tau, n_edges=7)
    print("seed," + ",".join(f"policy{p}" for p in sorted(POLICIES)))
    for seed in range(args.seeds):
        inst = generate_instance(dataclasses.replace(cfg, seed=seed))
        vals = [solve_ccg(policy_restrict(inst, p), backend, CcgOptions(mode=args.mode)).certified for p in sorted(POLICIES)]
        base = vals[0] or 1.0
        print(f"{seed}," + ",".join(f"{100 * v / base:.2f}" for v in vals))


if __name__ == "__main__":
    main()
